#pragma once

// Stage orchestration over persisted artifacts. Each stage declares its
// inputs, records their digests as provenance and is skipped when its
// outputs already carry the same provenance.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptgeo/artifact.hpp"
#include "gptgeo/config.hpp"
#include "gptgeo/corpus.hpp"
#include "gptgeo/csv.hpp"
#include "gptgeo/econometrics.hpp"
#include "gptgeo/geo.hpp"
#include "gptgeo/linkage.hpp"
#include "gptgeo/metrics.hpp"
#include "gptgeo/relatedness.hpp"
#include "gptgeo/topics.hpp"

namespace gptgeo::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

enum class Stage { ingest, link, geocode, label, relate, metrics, regress, report };

inline constexpr std::array<Stage, 8> kStageOrder = {Stage::ingest,  Stage::link,    Stage::geocode, Stage::label,
                                                     Stage::relate,  Stage::metrics, Stage::regress, Stage::report};

inline std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::link: return "link";
    case Stage::geocode: return "geocode";
    case Stage::label: return "label";
    case Stage::relate: return "relate";
    case Stage::metrics: return "metrics";
    case Stage::regress: return "regress";
    case Stage::report: return "report";
    }
    return "unknown";
}

inline Stage stage_from_string(std::string_view s) {
    for (auto st : kStageOrder)
        if (to_string(st) == s) return st;
    throw Error("invalid_argument", "unknown stage '" + std::string(s) + "'");
}

/// The fourteen report files, in manifest order.
inline const std::vector<std::string>& report_files() {
    static const std::vector<std::string> f = {
        "rca_by_country.csv",       "rca_by_region.csv",        "rca_changes.csv",       "concentration_timeseries.csv",
        "dispersion_timeseries.csv", "dl_share_timeseries.csv", "subject_shares.csv",    "impact_shares.csv",
        "relatedness_subjects.csv", "relatedness_industry.csv", "regression_table.json", "per_subject_coefficients.csv",
        "choropleth.geojson",       "manifest.json"};
    return f;
}

/// Exclusive ownership of an output directory for the lifetime of a run.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : path_(dir / ".gptgeo.lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) throw Error("locked", "output directory is in use (remove " + path_.string() + " if stale)");
        std::fclose(f);
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
};

// ---------------------------------------------------------------------------
// JSON helpers for records without a library mapping

inline json region_to_json(const Region& r) {
    json polys = json::array();
    for (const auto& p : r.boundary) {
        json rings = json::array();
        for (const auto& ring : p.rings) {
            json pts = json::array();
            for (const auto& v : ring) pts.push_back({v.lon, v.lat});
            rings.push_back(pts);
        }
        polys.push_back(rings);
    }
    return {{"region_id", r.region_id}, {"country_code", r.country_code}, {"coordinates", polys}};
}

inline Region region_from_json(const json& j) {
    Region r;
    r.region_id = j.at("region_id").get<std::string>();
    r.country_code = j.at("country_code").get<std::string>();
    for (const auto& poly : j.at("coordinates")) {
        Polygon p;
        for (const auto& ring : poly) {
            Ring rr;
            for (const auto& v : ring) rr.push_back({v.at(1).get<double>(), v.at(0).get<double>()});
            p.rings.push_back(std::move(rr));
        }
        r.boundary.push_back(std::move(p));
    }
    return r;
}

inline json rejections_json(const std::vector<Rejection>& rs) {
    json out = json::array();
    for (const auto& r : rs) out.push_back({{"line_no", r.line_no}, {"reason_code", r.reason_code}});
    return out;
}

/// A report table: fixed column names and rows of strings, numbers or nulls.
struct Table {
    std::vector<std::string> columns;
    json rows = json::array();

    void add(json row) { rows.push_back(std::move(row)); }
    json to_json() const { return {{"columns", columns}, {"rows", rows}}; }
};

inline json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::string table_csv(const json& t) {
    csv::Writer w(t.at("columns").get<std::vector<std::string>>());
    for (const auto& row : t.at("rows")) {
        std::vector<std::string> cells;
        for (const auto& c : row) {
            if (c.is_null()) cells.emplace_back();
            else if (c.is_string()) cells.push_back(c.get<std::string>());
            else if (c.is_number_integer()) cells.push_back(std::to_string(c.get<std::int64_t>()));
            else if (c.is_boolean()) cells.push_back(c.get<bool>() ? "1" : "0");
            else cells.push_back(csv::format_number(c.get<double>()));
        }
        w.row(cells);
    }
    return w.str();
}

// ---------------------------------------------------------------------------
// Analysis-side helpers shared by the metrics and regress stages

/// Papers kept by labeling, joined with their geography and DL flag.
inline std::vector<metrics::AnalysisPaper> analysis_papers(const json& geocoded, const json& labeled) {
    std::map<std::string, bool> dl;
    for (const auto& l : labeled.at("labels")) dl[l.at("paper_id").get<std::string>()] = l.at("dl_flag").get<bool>();
    const auto region_country = geocoded.at("region_country").get<std::map<std::string, std::string>>();
    std::vector<metrics::AnalysisPaper> out;
    for (const auto& pj : geocoded.at("papers")) {
        const auto p = pj.get<PaperRecord>();
        const auto it = dl.find(p.id);
        if (it == dl.end()) continue; // dropped by preprocessing
        metrics::AnalysisPaper a;
        a.id = p.id;
        a.pub_year = p.pub_year;
        a.citations = p.citations;
        a.subjects = p.subjects;
        a.dl = it->second;
        if (p.resolved_regions)
            for (const auto& r : *p.resolved_regions) {
                a.regions.insert(r);
                a.countries.insert(region_country.at(r));
            }
        out.push_back(std::move(a));
    }
    return out;
}

inline const std::set<std::string>& locations_at(const metrics::AnalysisPaper& p, geo::Level level) {
    return level == geo::Level::country ? p.countries : p.regions;
}

/// Location x {DL, non_DL} counts over the selected papers; both columns
/// always present.
inline geo::ActivityMatrix dl_matrix(const std::vector<const metrics::AnalysisPaper*>& papers, geo::Level level) {
    std::set<std::string> rows;
    for (const auto* p : papers) rows.insert(locations_at(*p, level).begin(), locations_at(*p, level).end());
    geo::ActivityMatrix m({rows.begin(), rows.end()}, {"DL", "non_DL"}, level);
    for (const auto* p : papers)
        for (const auto& l : locations_at(*p, level)) m.add(*m.row_index(l), *m.col_index(p->dl ? "DL" : "non_DL"), 1.0);
    return m;
}

/// Location x category counts (full counting) with a fixed column set.
inline geo::ActivityMatrix category_matrix(const std::vector<const metrics::AnalysisPaper*>& papers, geo::Level level,
                                           const std::set<std::string>& cols,
                                           const std::function<std::set<std::string>(const metrics::AnalysisPaper&)>& cats) {
    std::set<std::string> rows;
    for (const auto* p : papers) rows.insert(locations_at(*p, level).begin(), locations_at(*p, level).end());
    geo::ActivityMatrix m({rows.begin(), rows.end()}, {cols.begin(), cols.end()}, level);
    for (const auto* p : papers) {
        const auto cs = cats(*p);
        for (const auto& l : locations_at(*p, level))
            for (const auto& c : cs)
                if (const auto ci = m.col_index(c)) m.add(*m.row_index(l), *ci, 1.0);
    }
    return m;
}

/// RCA of `target` against everything else, from a location x target count
/// column and per-location totals.
inline std::optional<double> target_rca(const geo::ActivityMatrix& targets, const geo::ActivityMatrix& totals,
                                        const std::string& region, const std::string& target) {
    const auto ti = targets.col_index(target);
    if (!ti || !totals.row_index(region)) return std::nullopt;
    std::vector<std::string> rows = totals.rows();
    geo::ActivityMatrix two(rows, {"other", "target"}, totals.level());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double all = totals.at(r, 0);
        const double hit = targets.at(rows[r], target);
        two.set(r, 1, hit);
        two.set(r, 0, all - hit);
    }
    const auto r = *two.row_index(region);
    if (two.row_total(r) == 0.0 || two.col_total(1) == 0.0) return std::nullopt;
    return metrics::rca(two, r, 1);
}

/// Per-region RCA over every category with activity, for related specialization.
inline std::map<std::string, double> rca_row(const geo::ActivityMatrix& m, const std::string& region) {
    std::map<std::string, double> out;
    const auto r = m.row_index(region);
    if (!r || m.row_total(*r) == 0.0) return out;
    for (std::size_t c = 0; c < m.cols().size(); ++c)
        if (m.col_total(c) > 0.0) out[m.cols()[c]] = metrics::rca(m, *r, c);
    return out;
}

inline std::optional<std::map<std::string, double>> similarity_row(const relatedness::LabeledMatrix& m,
                                                                   const std::string& target,
                                                                   const std::set<std::string>& keep) {
    const auto r = m.row_index(target);
    if (!r) return std::nullopt;
    std::map<std::string, double> out;
    for (std::size_t c = 0; c < m.cols.size(); ++c)
        if (keep.empty() || keep.count(m.cols[c])) out[m.cols[c]] = m.at(*r, c);
    return out;
}

inline std::optional<double> specialization(const std::map<std::string, double>& rcas,
                                            const std::optional<std::map<std::string, double>>& sims,
                                            const std::string& target) {
    if (rcas.empty() || !sims) return std::nullopt;
    try {
        return metrics::related_specialization(rcas, *sims, target);
    } catch (const Error& e) {
        if (e.code() == "undefined_score") return std::nullopt;
        throw;
    }
}

/// Table skeleton used when the suite cannot be estimated on the sample.
inline json unestimated_regression_table(const econometrics::FeatureTable& table, const std::string& reason) {
    json j;
    j["dependent"] = "RCA_t1";
    j["standard_errors"] = "clustered by country (CR1)";
    j["stars"] = "*** p<0.01, ** p<0.05, * p<0.10 (normal reference)";
    j["standardized"] = table.standardized;
    j["interactions"] = "products of standardized base columns, not rescaled";
    json rows = json::array();
    for (const auto& [_, label] : econometrics::table_rows()) rows.push_back(label);
    j["regressors"] = rows;
    json models = json::array();
    for (const auto& spec : econometrics::model_suite_specs()) {
        json coefs = json::object();
        for (const auto& [key, label] : econometrics::table_rows()) {
            const bool in = std::find(spec.regressors.begin(), spec.regressors.end(), key) != spec.regressors.end();
            coefs[label] = in ? json{{"coef", nullptr}, {"se", nullptr}, {"p", nullptr}, {"stars", ""}} : json(nullptr);
        }
        models.push_back({{"name", spec.name},
                          {"coefficients", coefs},
                          {"intercept", {{"coef", nullptr}, {"se", nullptr}}},
                          {"r2", nullptr},
                          {"n", table.rows.size()}});
    }
    j["models"] = models;
    j["status"] = "not_estimable";
    j["reason"] = reason;
    return j;
}

// ---------------------------------------------------------------------------

class Runner {
public:
    Runner(RunConfig cfg, std::ostream& log, bool force = false)
        : cfg_(std::move(cfg)), log_(log), force_(force), out_(cfg_.output_dir) {}

    void run(Stage s) {
        const OutputLock lock(out_);
        run_unlocked(s);
    }

    void run_all() {
        const OutputLock lock(out_);
        for (auto s : kStageOrder) run_unlocked(s);
    }

    fs::path artifact_path(ArtifactKind k) const { return out_ / "artifacts" / (std::string(to_string(k)) + ".json"); }
    fs::path reports_dir() const { return out_ / "reports"; }
    fs::path diagnostics_dir() const { return out_ / "diagnostics"; }

private:
    void run_unlocked(Stage s) {
        switch (s) {
        case Stage::ingest: return ingest();
        case Stage::link: return link();
        case Stage::geocode: return geocode();
        case Stage::label: return label();
        case Stage::relate: return relate();
        case Stage::metrics: return compute_metrics();
        case Stage::regress: return regress();
        case Stage::report: return report();
        }
    }

    void require(std::initializer_list<ArtifactKind> kinds) const {
        std::string missing;
        for (auto k : kinds)
            if (!fs::exists(artifact_path(k))) missing += (missing.empty() ? "" : ", ") + std::string(to_string(k));
        if (!missing.empty()) throw Error("missing_prerequisite", "missing prerequisite artifact: " + missing);
    }

    json payload(ArtifactKind k) const { return load_artifact(artifact_path(k).string()).payload; }

    Provenance provenance(const std::map<std::string, std::string>& files,
                          std::initializer_list<ArtifactKind> upstream) const {
        Provenance p;
        p.config_hash = cfg_.hash();
        for (const auto& [name, path] : files) p.input_digests[name] = file_digest(path);
        for (auto k : upstream) p.input_digests[std::string(to_string(k))] = file_digest(artifact_path(k).string());
        return p;
    }

    bool up_to_date(Stage s, std::initializer_list<ArtifactKind> outputs, const Provenance& p) const {
        if (force_) return false;
        for (auto k : outputs) {
            const auto path = artifact_path(k);
            if (!fs::exists(path)) return false;
            try {
                if (!(load_artifact(path.string()).provenance == p)) return false;
            } catch (const Error&) {
                return false;
            }
        }
        log_ << "stage " << to_string(s) << ": up-to-date, skipped\n";
        return true;
    }

    void write(ArtifactKind k, json payload, const Provenance& p) const {
        fs::create_directories(artifact_path(k).parent_path());
        persist_artifact(make_artifact(k, std::move(payload), p), artifact_path(k).string());
    }

    void write_diagnostic(const std::string& name, std::string_view bytes) const {
        fs::create_directories(diagnostics_dir());
        write_file((diagnostics_dir() / name).string(), bytes);
    }

    void done(Stage s, const std::string& detail) const { log_ << "stage " << to_string(s) << ": " << detail << "\n"; }

    // -- stages --------------------------------------------------------------

    void ingest() {
        const auto p = provenance(
            {{"papers", cfg_.papers}, {"registry", cfg_.registry}, {"companies", cfg_.companies}, {"boundaries", cfg_.boundaries}},
            {});
        if (up_to_date(Stage::ingest, {ArtifactKind::ingested_corpus}, p)) return;
        const auto papers = ingest_papers(cfg_.papers, cfg_.ingest);
        const auto registry = ingest_registry(cfg_.registry, cfg_.ingest);
        const auto companies = ingest_companies(cfg_.companies, cfg_.ingest);
        const auto regions = ingest_boundaries(cfg_.boundaries, cfg_.ingest);
        if (registry.records.empty()) throw Error("empty_registry", "institute registry has no valid rows");
        if (regions.records.empty()) throw Error("invalid_geometry", "boundary file has no valid regions");

        json j;
        j["papers"] = papers.records;
        j["registry"] = registry.records;
        j["companies"] = companies.records;
        j["regions"] = json::array();
        for (const auto& r : regions.records) j["regions"].push_back(region_to_json(r));
        j["rejections"] = {{"papers", rejections_json(papers.rejections)},
                           {"registry", rejections_json(registry.rejections)},
                           {"companies", rejections_json(companies.rejections)},
                           {"boundaries", rejections_json(regions.rejections)}};
        j["rows_read"] = {{"papers", papers.rows_read},
                          {"registry", registry.rows_read},
                          {"companies", companies.rows_read},
                          {"boundaries", regions.rows_read}};
        write_diagnostic("rejections_papers.csv", rejection_report_csv(papers.rejections));
        write_diagnostic("rejections_registry.csv", rejection_report_csv(registry.rejections));
        write_diagnostic("rejections_companies.csv", rejection_report_csv(companies.rejections));
        write_diagnostic("rejections_boundaries.csv", rejection_report_csv(regions.rejections));
        write(ArtifactKind::ingested_corpus, std::move(j), p);
        done(Stage::ingest, std::to_string(papers.records.size()) + " papers, " + std::to_string(registry.records.size()) +
                                " institutes, " + std::to_string(companies.records.size()) + " companies, " +
                                std::to_string(regions.records.size()) + " regions");
    }

    void link() {
        require({ArtifactKind::ingested_corpus});
        const auto p = provenance({}, {ArtifactKind::ingested_corpus});
        if (up_to_date(Stage::link, {ArtifactKind::linked_corpus}, p)) return;
        const auto in = payload(ArtifactKind::ingested_corpus);
        const auto papers = in.at("papers").get<std::vector<PaperRecord>>();
        const auto registry = in.at("registry").get<std::vector<InstituteEntry>>();
        const auto linked = linkage::link_corpus(papers, registry, cfg_.matching);

        json links = json::array();
        for (const auto& l : linked.links)
            links.push_back({{"paper_id", l.paper_id},
                             {"query_name", l.result.query_name},
                             {"matched_id", l.result.matched_id ? json(*l.result.matched_id) : json(nullptr)},
                             {"score", l.result.score},
                             {"method", std::string(linkage::to_string(l.result.method))}});
        const auto summary = linkage::link_summary_json(linked.report);
        write_diagnostic("link_report.csv", linkage::link_report_csv(linked.links));
        write_diagnostic("link_summary.json", summary.dump(1) + "\n");
        write(ArtifactKind::linked_corpus,
              {{"registry_ids", linked.registry_ids}, {"links", links}, {"report", summary}}, p);
        done(Stage::link, std::to_string(linked.report.affiliations) + " affiliations, match rate " +
                              (linked.report.match_rate ? csv::format_number(*linked.report.match_rate) : "n/a"));
    }

    void geocode() {
        require({ArtifactKind::ingested_corpus, ArtifactKind::linked_corpus});
        const auto p = provenance({}, {ArtifactKind::ingested_corpus, ArtifactKind::linked_corpus});
        if (up_to_date(Stage::geocode, {ArtifactKind::geocoded_corpus}, p)) return;
        const auto in = payload(ArtifactKind::ingested_corpus);
        const auto linked = payload(ArtifactKind::linked_corpus);
        auto papers = in.at("papers").get<std::vector<PaperRecord>>();
        auto companies = in.at("companies").get<std::vector<CompanyRecord>>();
        const auto registry = in.at("registry").get<std::vector<InstituteEntry>>();
        std::vector<Region> regions;
        for (const auto& r : in.at("regions")) regions.push_back(region_from_json(r));
        const geo::RegionIndex index(regions);
        const auto registry_ids = linked.at("registry_ids").get<std::map<std::string, std::vector<std::string>>>();

        geo::GeocodeReport report;
        geo::geocode_papers(papers, registry_ids, registry, index, report);
        geo::geocode_companies(companies, index, report);
        std::map<std::string, std::string> region_country;
        for (const auto& r : index.regions()) region_country[r.region_id] = r.country_code;

        const json rep = {{"papers_without_region", report.papers_without_region},
                          {"institutes_without_region", report.institutes_without_region},
                          {"companies_without_region", report.companies_without_region},
                          {"warnings", report.diagnostics.warnings}};
        write_diagnostic("geocode_report.json", rep.dump(1) + "\n");
        write(ArtifactKind::geocoded_corpus,
              {{"papers", papers}, {"companies", companies}, {"region_country", region_country}, {"report", rep}}, p);
        done(Stage::geocode, std::to_string(report.papers_without_region) + " papers without region, " +
                                 std::to_string(report.diagnostics.warnings.size()) + " warnings");
    }

    void label() {
        require({ArtifactKind::geocoded_corpus});
        std::map<std::string, std::string> files{{"topic_model", cfg_.topic_model}};
        if (cfg_.stopwords) files["stopwords"] = *cfg_.stopwords;
        const auto p = provenance(files, {ArtifactKind::geocoded_corpus});
        if (up_to_date(Stage::label, {ArtifactKind::labeled_corpus}, p)) return;
        const auto gj = payload(ArtifactKind::geocoded_corpus);
        const auto papers = gj.at("papers").get<std::vector<PaperRecord>>();
        const auto model = topics::parse_topic_model_csv(read_file(cfg_.topic_model));

        std::vector<std::string> texts;
        for (const auto& pr : papers) texts.push_back(pr.abstract);
        const topics::Preprocessor pre(texts, cfg_.preprocessing);
        std::vector<topics::TokenDocument> docs;
        json dropped = json::array();
        for (std::size_t i = 0; i < papers.size(); ++i) {
            auto d = pre.transform(papers[i].id, texts[i]);
            if (d) docs.push_back(std::move(*d));
            else dropped.push_back(papers[i].id);
        }
        const auto labels = topics::label_dl(docs, model, cfg_.labeling);
        json rows = json::array();
        for (const auto& r : labels.rows)
            rows.push_back({{"paper_id", r.paper_id}, {"dl_flag", r.dl_flag}, {"assigned_topics", r.assigned_topics}});
        const json summary = {{"documents", labels.summary.documents},
                              {"dl_count", labels.summary.dl_count},
                              {"dl_share", opt(labels.summary.dl_share)},
                              {"dropped", dropped.size()}};
        write_diagnostic("labels.csv", topics::label_csv(labels.rows));
        write(ArtifactKind::labeled_corpus,
              {{"labels", rows},
               {"dropped", dropped},
               {"summary", summary},
               {"ngram_vocabulary", std::vector<std::string>(pre.ngram_vocabulary().begin(), pre.ngram_vocabulary().end())}},
              p);
        done(Stage::label, std::to_string(labels.summary.dl_count) + " of " + std::to_string(labels.summary.documents) +
                               " documents labeled DL, " + std::to_string(dropped.size()) + " dropped");
    }

    void relate() {
        require({ArtifactKind::labeled_corpus, ArtifactKind::geocoded_corpus});
        const auto p = provenance({}, {ArtifactKind::labeled_corpus, ArtifactKind::geocoded_corpus});
        if (up_to_date(Stage::relate, {ArtifactKind::relatedness_matrix}, p)) return;
        const auto gj = payload(ArtifactKind::geocoded_corpus);
        const auto lab = payload(ArtifactKind::labeled_corpus);
        std::map<std::string, bool> dl;
        for (const auto& l : lab.at("labels")) dl[l.at("paper_id").get<std::string>()] = l.at("dl_flag").get<bool>();
        std::vector<PaperRecord> kept;
        std::vector<relatedness::ResearchDocument> docs;
        for (const auto& pj : gj.at("papers")) {
            auto pr = pj.get<PaperRecord>();
            const auto it = dl.find(pr.id);
            if (it == dl.end()) continue;
            docs.push_back({pr.id, pr.subjects, it->second, pr.abstract});
            kept.push_back(std::move(pr));
        }
        const auto subjects = relatedness::subject_relatedness(kept, &dl);
        const auto companies = gj.at("companies").get<std::vector<CompanyRecord>>();
        const auto clf = relatedness::train_category_classifier(companies, cfg_.classifier);
        const auto industry = relatedness::research_industry_relatedness(docs, clf, cfg_.classifier_threshold);

        write_diagnostic("relatedness_subjects.csv", relatedness::to_long_csv(subjects.matrix));
        write_diagnostic("relatedness_industry.csv", relatedness::to_long_csv(industry.matrix));
        write(ArtifactKind::relatedness_matrix,
              {{"subjects", subjects.matrix},
               {"subjects_excluded", subjects.excluded},
               {"industry", industry.matrix},
               {"industry_excluded", industry.excluded},
               {"classifier", relatedness::classifier_to_json(clf)}},
              p);
        done(Stage::relate, std::to_string(subjects.matrix.rows.size()) + " subjects, " +
                                std::to_string(clf.sectors.size()) + " sector models, " +
                                std::to_string(clf.skipped.size()) + " sectors skipped");
    }

    void compute_metrics() {
        require({ArtifactKind::labeled_corpus, ArtifactKind::geocoded_corpus});
        const auto p = provenance({}, {ArtifactKind::labeled_corpus, ArtifactKind::geocoded_corpus});
        if (up_to_date(Stage::metrics, {ArtifactKind::activity_matrix, ArtifactKind::metrics_report}, p)) return;
        const auto gj = payload(ArtifactKind::geocoded_corpus);
        const auto papers = analysis_papers(gj, payload(ArtifactKind::labeled_corpus));
        const auto region_country = gj.at("region_country").get<std::map<std::string, std::string>>();
        const auto& split = cfg_.split;

        json omissions = json::array();
        const auto med = metrics::above_median_citations<metrics::AnalysisPaper>(papers);
        for (int y : med.dropped_years)
            omissions.push_back({{"product", "above_median_filter"}, {"year", y}, {"reason", "fewer_than_two_papers"}});
        std::vector<const metrics::AnalysisPaper*> above;
        for (auto i : med.kept) above.push_back(&papers[i]);
        auto select = [](const std::vector<const metrics::AnalysisPaper*>& v, auto pred) {
            std::vector<const metrics::AnalysisPaper*> out;
            for (const auto* p : v)
                if (pred(*p)) out.push_back(p);
            return out;
        };
        auto in_period = [&](const std::string& period) {
            return [&, period](const metrics::AnalysisPaper& p) { return split.label(p.pub_year) == period; };
        };

        json activity;
        activity["region_country"] = region_country;
        json tables;

        // RCA of DL by location and period.
        std::map<geo::Level, metrics::RcaTable> dl_rca;
        for (auto level : {geo::Level::country, geo::Level::region}) {
            std::map<std::string, geo::ActivityMatrix> by_period;
            for (const std::string period : {"t0", "t1"}) by_period[period] = dl_matrix(select(above, in_period(period)), level);
            const double floor_pct =
                level == geo::Level::country ? cfg_.country_floor_percentile : cfg_.region_floor_percentile;
            dl_rca[level] = metrics::rca_table(by_period, floor_pct);
            activity[std::string("dl_by_") + std::string(geo::to_string(level))] = by_period;
            for (const auto& ex : dl_rca[level].exclusions)
                omissions.push_back({{"product", "rca_by_" + std::string(geo::to_string(level))},
                                     {"location", ex.location},
                                     {"category", ex.category},
                                     {"period", ex.period},
                                     {"reason", ex.reason}});

            Table t{{"location", "country_code", "period", "dl_activity", "total_activity", "rca"}};
            for (const auto& e : dl_rca[level].entries) {
                if (e.category != "DL") continue;
                const auto cc = level == geo::Level::country ? e.location : region_country.at(e.location);
                t.add({e.location, cc, e.period, e.category_activity, e.location_activity, e.value});
            }
            tables["rca_by_" + std::string(geo::to_string(level))] = t.to_json();
        }
        {
            Table t{{"level", "location", "country_code", "rca_t0", "rca_t1", "change"}};
            for (auto level : {geo::Level::country, geo::Level::region}) {
                std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> both;
                for (const auto& e : dl_rca[level].entries)
                    if (e.category == "DL") (e.period == "t0" ? both[e.location].first : both[e.location].second) = e.value;
                for (const auto& [loc, v] : both) {
                    if (!v.first || !v.second) continue;
                    const auto cc = level == geo::Level::country ? loc : region_country.at(loc);
                    t.add({std::string(geo::to_string(level)), loc, cc, *v.first, *v.second, *v.second - *v.first});
                }
            }
            tables["rca_changes"] = t.to_json();
        }

        // Concentration of highly cited papers among the top-k locations.
        {
            const auto flags = metrics::highly_cited_flags<metrics::AnalysisPaper>(papers);
            std::set<int> years;
            for (const auto& p : papers) years.insert(p.pub_year);
            Table t{{"year", "level", "scope", "k", "locations", "total_activity", "share"}};
            for (int y : years)
                for (auto level : {geo::Level::country, geo::Level::region})
                    for (const std::string scope : {"all", "dl"}) {
                        std::map<std::string, double> counts;
                        for (std::size_t i = 0; i < papers.size(); ++i) {
                            const auto& p = papers[i];
                            if (p.pub_year != y || !flags[i] || (scope == "dl" && !p.dl)) continue;
                            for (const auto& l : locations_at(p, level)) counts[l] += 1.0;
                        }
                        const std::size_t k =
                            level == geo::Level::country ? cfg_.concentration_k_country : cfg_.concentration_k_region;
                        std::vector<double> v;
                        double total = 0.0;
                        for (const auto& [_, c] : counts) {
                            v.push_back(c);
                            total += c;
                        }
                        if (total == 0.0) {
                            omissions.push_back({{"product", "concentration_timeseries"},
                                                 {"year", y},
                                                 {"level", std::string(geo::to_string(level))},
                                                 {"scope", scope},
                                                 {"reason", "no_located_highly_cited_papers"}});
                            continue;
                        }
                        t.add({y, std::string(geo::to_string(level)), scope, k, v.size(), total,
                               metrics::concentration_top_k(v, k)});
                    }
            tables["concentration_timeseries"] = t.to_json();
        }

        // Yearly RCA dispersion among the most active locations.
        {
            Table t{{"year", "level", "statistic", "location", "value"}};
            for (auto level : {geo::Level::country, geo::Level::region}) {
                std::map<int, std::map<std::string, double>> by_year;
                std::map<std::string, double> totals;
                std::set<int> years;
                for (const auto* p : above) {
                    years.insert(p->pub_year);
                    for (const auto& l : locations_at(*p, level)) totals[l] += 1.0;
                }
                for (int y : years) {
                    const auto m = dl_matrix(select(above, [y](const auto& p) { return p.pub_year == y; }), level);
                    const auto dl_col = *m.col_index("DL");
                    if (m.empty() || m.col_total(dl_col) == 0.0) {
                        omissions.push_back({{"product", "dispersion_timeseries"},
                                             {"year", y},
                                             {"level", std::string(geo::to_string(level))},
                                             {"reason", "no_dl_activity"}});
                        continue;
                    }
                    for (std::size_t r = 0; r < m.rows().size(); ++r)
                        if (m.row_total(r) > 0.0) by_year[y][m.rows()[r]] = metrics::rca(m, r, dl_col);
                }
                const std::size_t top =
                    level == geo::Level::country ? cfg_.dispersion_top_countries : cfg_.dispersion_top_regions;
                const auto disp = metrics::rca_dispersion(by_year, totals, top);
                const std::string lv(geo::to_string(level));
                for (const auto& s : disp.years) {
                    t.add({s.year, lv, "n", "", s.n});
                    t.add({s.year, lv, "mean", "", s.mean});
                    t.add({s.year, lv, "sd", "", s.sd});
                    t.add({s.year, lv, "q25", "", s.q25});
                    t.add({s.year, lv, "median", "", s.median});
                    t.add({s.year, lv, "q75", "", s.q75});
                    for (const auto& [loc, v] : s.values) t.add({s.year, lv, "rca", loc, v});
                }
                for (int y : disp.omitted_years)
                    omissions.push_back(
                        {{"product", "dispersion_timeseries"}, {"year", y}, {"level", lv}, {"reason", "no_top_locations"}});
            }
            tables["dispersion_timeseries"] = t.to_json();
        }

        // DL share over time, overall and per subject.
        std::set<std::string> subjects;
        for (const auto& p : papers) subjects.insert(p.subjects.begin(), p.subjects.end());
        {
            Table t{{"subject", "year", "papers", "dl_papers", "share", "moving_average"}};
            auto emit = [&](const std::string& name, const std::vector<metrics::YearShare>& series) {
                for (const auto& s : series) t.add({name, s.year, s.papers, s.dl_papers, s.share, s.moving_average});
            };
            emit("all", metrics::dl_share_timeseries(papers, cfg_.moving_average_window));
            for (const auto& s : subjects)
                emit(s, metrics::dl_share_timeseries(papers, cfg_.moving_average_window,
                                                     [&s](const metrics::AnalysisPaper& p) { return p.subjects.count(s) > 0; }));
            tables["dl_share_timeseries"] = t.to_json();
        }
        {
            Table t{{"subject", "rank", "papers_t0", "papers_t1", "dl_t0", "dl_t1", "share_t0", "share_t1"}};
            for (const auto& s : metrics::subject_share_before_after(papers, split))
                t.add({s.subject, s.rank, s.papers_t0, s.papers_t1, s.dl_t0, s.dl_t1, opt(s.share_t0), opt(s.share_t1)});
            tables["subject_shares"] = t.to_json();
        }
        {
            Table t{{"min_year", "subject", "papers", "highly_cited", "dl_share_all", "dl_share_highly_cited"}};
            for (int y : cfg_.impact_min_years) {
                const auto r = metrics::impact_overrepresentation(papers, y);
                for (const auto& s : r.subjects)
                    t.add({y, s.subject, s.papers, s.highly_cited, s.dl_share_all, opt(s.dl_share_highly_cited)});
                for (const auto& s : r.excluded)
                    omissions.push_back(
                        {{"product", "impact_shares"}, {"min_year", y}, {"subject", s}, {"reason", "no_papers_since_min_year"}});
            }
            tables["impact_shares"] = t.to_json();
        }

        // Region-level matrices consumed by the regression stage.
        std::set<std::string> target_cols = subjects;
        target_cols.insert(std::string(relatedness::kDlLabel));
        json targets, totals;
        for (const std::string period : {"t0", "t1"}) {
            const auto sel = select(above, in_period(period));
            targets[period] = category_matrix(sel, geo::Level::region, target_cols, [](const metrics::AnalysisPaper& p) {
                auto c = p.subjects;
                if (p.dl) c.insert(std::string(relatedness::kDlLabel));
                return c;
            });
            totals[period] = category_matrix(sel, geo::Level::region, {"papers"},
                                             [](const metrics::AnalysisPaper&) { return std::set<std::string>{"papers"}; });
        }
        activity["targets_by_region"] = targets;
        activity["above_median_papers_by_region"] = totals;
        activity["subjects_by_region_t0"] = category_matrix(
            select(above, in_period("t0")), geo::Level::region, subjects,
            [](const metrics::AnalysisPaper& p) { return p.subjects; });
        {
            std::vector<const metrics::AnalysisPaper*> all;
            for (const auto& p : papers)
                if (split.label(p.pub_year) == "t0") all.push_back(&p);
            activity["papers_by_region_t0"] = category_matrix(
                all, geo::Level::region, {"papers"}, [](const metrics::AnalysisPaper&) { return std::set<std::string>{"papers"}; });
        }
        {
            const auto companies = gj.at("companies").get<std::vector<CompanyRecord>>();
            std::vector<const CompanyRecord*> located;
            std::set<std::string> sectors;
            for (const auto& c : companies) {
                sectors.insert(c.categories.begin(), c.categories.end());
                if (c.resolved_region) located.push_back(&c);
            }
            std::set<std::string> rows;
            for (const auto* c : located) rows.insert(*c->resolved_region);
            geo::ActivityMatrix by_sector({rows.begin(), rows.end()}, {sectors.begin(), sectors.end()});
            geo::ActivityMatrix count({rows.begin(), rows.end()}, {"companies"});
            for (const auto* c : located) {
                const auto r = *by_sector.row_index(*c->resolved_region);
                for (const auto& s : c->categories) by_sector.add(r, *by_sector.col_index(s), 1.0);
                count.add(*count.row_index(*c->resolved_region), 0, 1.0);
            }
            activity["sectors_by_region"] = by_sector;
            activity["companies_by_region"] = count;
        }

        json report;
        report["tables"] = tables;
        report["omissions"] = omissions;
        report["medians"] = json::object();
        for (const auto& [y, m] : med.medians) report["medians"][std::to_string(y)] = m;
        report["papers"] = papers.size();
        report["above_median_papers"] = above.size();
        report["filters"] = {{"split_t0_max_year", split.t0_max_year},
                             {"country_floor_percentile", cfg_.country_floor_percentile},
                             {"region_floor_percentile", cfg_.region_floor_percentile},
                             {"moving_average_window", cfg_.moving_average_window},
                             {"impact_min_years", cfg_.impact_min_years},
                             {"concentration_k_country", cfg_.concentration_k_country},
                             {"concentration_k_region", cfg_.concentration_k_region},
                             {"dispersion_top_countries", cfg_.dispersion_top_countries},
                             {"dispersion_top_regions", cfg_.dispersion_top_regions},
                             {"citation_filter", "strictly above the per-year median"},
                             {"highly_cited", "at or above the per-year nearest-rank 75th percentile"}};
        write(ArtifactKind::activity_matrix, std::move(activity), p);
        write(ArtifactKind::metrics_report, std::move(report), p);
        done(Stage::metrics, std::to_string(papers.size()) + " analysis papers, " + std::to_string(above.size()) +
                                 " above the citation median");
    }

    void regress() {
        require({ArtifactKind::activity_matrix, ArtifactKind::relatedness_matrix});
        const auto p = provenance({}, {ArtifactKind::activity_matrix, ArtifactKind::relatedness_matrix});
        if (up_to_date(Stage::regress, {ArtifactKind::feature_table, ArtifactKind::model_report}, p)) return;
        const auto act = payload(ArtifactKind::activity_matrix);
        const auto rel = payload(ArtifactKind::relatedness_matrix);
        const auto region_country = act.at("region_country").get<std::map<std::string, std::string>>();
        std::map<std::string, geo::ActivityMatrix> targets, above_totals;
        for (const std::string period : {"t0", "t1"}) {
            targets[period] = act.at("targets_by_region").at(period).get<geo::ActivityMatrix>();
            above_totals[period] = act.at("above_median_papers_by_region").at(period).get<geo::ActivityMatrix>();
        }
        const auto subjects_t0 = act.at("subjects_by_region_t0").get<geo::ActivityMatrix>();
        const auto sectors = act.at("sectors_by_region").get<geo::ActivityMatrix>();
        const auto papers_t0 = act.at("papers_by_region_t0").get<geo::ActivityMatrix>();
        const auto companies = act.at("companies_by_region").get<geo::ActivityMatrix>();
        const auto subject_sim = rel.at("subjects").get<relatedness::LabeledMatrix>();
        const auto industry_sim = rel.at("industry").get<relatedness::LabeledMatrix>();
        const std::set<std::string> subject_cats(subjects_t0.cols().begin(), subjects_t0.cols().end());

        auto inputs_for = [&](const std::string& target) {
            std::vector<econometrics::RegionInputs> out;
            const auto sims = similarity_row(subject_sim, target, subject_cats);
            const auto ind = similarity_row(industry_sim, target, {});
            for (const auto& [region, country] : region_country) {
                econometrics::RegionInputs in;
                in.region_id = region;
                in.country_code = country;
                in.rca_t0 = target_rca(targets["t0"], above_totals["t0"], region, target);
                in.rca_t1 = target_rca(targets["t1"], above_totals["t1"], region, target);
                in.arxiv_sp = specialization(rca_row(subjects_t0, region), sims, target);
                in.crunchbase_sp = specialization(rca_row(sectors, region), ind, target);
                in.arxiv_total = papers_t0.at(region, "papers");
                in.crunchbase_total = companies.at(region, "companies");
                out.push_back(std::move(in));
            }
            return out;
        };

        const std::string dl(relatedness::kDlLabel);
        const auto dl_inputs = inputs_for(dl);
        json ft, model;
        econometrics::FeatureTable table;
        std::optional<std::string> failure;
        try {
            table = econometrics::build_feature_table(dl_inputs, cfg_.regression);
        } catch (const Error& e) {
            failure = e.what();
        }
        json rows = json::array();
        for (const auto& r : table.rows)
            rows.push_back({{"region_id", r.region_id},
                            {"country_code", r.country_code},
                            {"rca_t1", r.rca_t1},
                            {"rca_t0", r.rca_t0},
                            {"arxiv_sp", r.arxiv_sp},
                            {"crunchbase_sp", r.crunchbase_sp},
                            {"arxiv_tot", r.arxiv_tot},
                            {"crunchbase_tot", r.crunchbase_tot},
                            {"is_china", r.is_china}});
        json exclusions = json::array();
        for (const auto& e : table.exclusions) exclusions.push_back({{"region_id", e.region_id}, {"reason", e.reason}});
        json scaling = json::object();
        for (const auto& [col, ms] : table.scaling) scaling[col] = {{"mean", ms.first}, {"sd", ms.second}};
        ft = {{"target", dl},
              {"rows", rows},
              {"exclusions", exclusions},
              {"activity_floor", table.activity_floor},
              {"standardized", table.standardized},
              {"scaling", scaling},
              {"error", failure ? json(*failure) : json(nullptr)}};

        if (!failure) {
            try {
                auto j = econometrics::regression_table_json(econometrics::run_model_suite(table), table);
                j["status"] = "estimated";
                model["regression_table"] = j;
            } catch (const Error& e) {
                failure = e.what();
            }
        }
        if (failure) model["regression_table"] = unestimated_regression_table(table, *failure);

        std::map<std::string, std::vector<econometrics::RegionInputs>> by_subject{{dl, dl_inputs}};
        for (const auto& s : subject_cats) by_subject[s] = inputs_for(s);
        const auto per = econometrics::per_subject_models(by_subject, cfg_.regression, cfg_.per_subject_min_rows);
        json per_rows = json::array();
        for (const auto& r : per.rows)
            per_rows.push_back({r.subject, r.regressor, r.coefficient, r.se, r.ci_low, r.ci_high, r.n, r.r2});
        json skipped = json::array();
        for (const auto& [s, why] : per.skipped) skipped.push_back({{"subject", s}, {"reason", why}});
        model["per_subject"] = Table{{"subject", "regressor", "coefficient", "se", "ci_low", "ci_high", "n", "r2"},
                                     per_rows}
                                   .to_json();
        model["per_subject_skipped"] = skipped;

        write(ArtifactKind::feature_table, std::move(ft), p);
        write(ArtifactKind::model_report, model, p);
        done(Stage::regress, std::to_string(table.rows.size()) + " regions in sample, suite " +
                                 model["regression_table"]["status"].get<std::string>() + ", " +
                                 std::to_string(per.skipped.size()) + " subject models skipped");
    }

    void report() {
        struct Source {
            ArtifactKind kind;
            std::vector<std::string> files;
        };
        const std::vector<Source> sources = {
            {ArtifactKind::metrics_report,
             {"rca_by_country.csv", "rca_by_region.csv", "rca_changes.csv", "concentration_timeseries.csv",
              "dispersion_timeseries.csv", "dl_share_timeseries.csv", "subject_shares.csv", "impact_shares.csv",
              "choropleth.geojson"}},
            {ArtifactKind::relatedness_matrix, {"relatedness_subjects.csv", "relatedness_industry.csv"}},
            {ArtifactKind::model_report, {"regression_table.json", "per_subject_coefficients.csv"}},
        };
        Provenance prov;
        prov.config_hash = cfg_.hash();
        for (auto k : {ArtifactKind::ingested_corpus, ArtifactKind::metrics_report, ArtifactKind::relatedness_matrix,
                       ArtifactKind::model_report})
            if (fs::exists(artifact_path(k)))
                prov.input_digests[std::string(to_string(k))] = file_digest(artifact_path(k).string());

        const auto dir = reports_dir();
        const auto manifest_path = dir / "manifest.json";
        if (!force_ && fs::exists(manifest_path)) {
            const auto old = json::parse(read_file(manifest_path.string()), nullptr, false);
            if (!old.is_discarded() && old.contains("provenance") &&
                old["provenance"] == json{{"config_hash", prov.config_hash}, {"input_digests", prov.input_digests}}) {
                bool all_there = true;
                for (const auto& f : old.at("files")) all_there = all_there && fs::exists(dir / f.at("name").get<std::string>());
                if (all_there) {
                    log_ << "stage report: up-to-date, skipped\n";
                    return;
                }
            }
        }
        fs::create_directories(dir);

        std::map<std::string, std::string> outputs;
        json omitted = json::array();
        std::map<ArtifactKind, json> loaded;
        for (const auto& src : sources) {
            if (!fs::exists(artifact_path(src.kind))) {
                for (const auto& f : src.files)
                    omitted.push_back({{"name", f}, {"reason", "missing artifact " + std::string(to_string(src.kind))}});
                continue;
            }
            loaded[src.kind] = payload(src.kind);
        }
        if (loaded.count(ArtifactKind::metrics_report)) {
            const auto& t = loaded[ArtifactKind::metrics_report].at("tables");
            for (const auto* name : {"rca_by_country", "rca_by_region", "rca_changes", "concentration_timeseries",
                                     "dispersion_timeseries", "dl_share_timeseries", "subject_shares", "impact_shares"})
                outputs[std::string(name) + ".csv"] = table_csv(t.at(name));
            if (fs::exists(artifact_path(ArtifactKind::ingested_corpus)))
                outputs["choropleth.geojson"] =
                    choropleth(payload(ArtifactKind::ingested_corpus).at("regions"), t.at("rca_by_region")).dump(1) + "\n";
            else
                omitted.push_back({{"name", "choropleth.geojson"}, {"reason", "missing artifact ingested_corpus"}});
        }
        if (loaded.count(ArtifactKind::relatedness_matrix)) {
            const auto& r = loaded[ArtifactKind::relatedness_matrix];
            outputs["relatedness_subjects.csv"] = relatedness::to_long_csv(r.at("subjects").get<relatedness::LabeledMatrix>());
            outputs["relatedness_industry.csv"] = relatedness::to_long_csv(r.at("industry").get<relatedness::LabeledMatrix>());
        }
        if (loaded.count(ArtifactKind::model_report)) {
            const auto& m = loaded[ArtifactKind::model_report];
            outputs["regression_table.json"] = m.at("regression_table").dump(1) + "\n";
            outputs["per_subject_coefficients.csv"] = table_csv(m.at("per_subject"));
        }

        for (const auto& f : report_files()) {
            if (f == "manifest.json" || outputs.count(f)) continue;
            std::error_code ec;
            fs::remove(dir / f, ec);
        }
        json files = json::array();
        for (const auto& f : report_files()) {
            const auto it = outputs.find(f);
            if (it == outputs.end()) continue;
            write_file((dir / f).string(), it->second);
            files.push_back({{"name", f}, {"sha256", sha256_hex(it->second)}});
        }
        json manifest;
        manifest["files"] = files;
        manifest["omitted"] = omitted;
        manifest["provenance"] = {{"config_hash", prov.config_hash}, {"input_digests", prov.input_digests}};
        manifest["config_hash"] = prov.config_hash;
        manifest["seed"] = cfg_.seed;
        if (loaded.count(ArtifactKind::metrics_report)) {
            manifest["filters"] = loaded[ArtifactKind::metrics_report].at("filters");
            manifest["product_omissions"] = loaded[ArtifactKind::metrics_report].at("omissions");
        }
        if (loaded.count(ArtifactKind::model_report)) {
            manifest["per_subject_skipped"] = loaded[ArtifactKind::model_report].at("per_subject_skipped");
            manifest["regression_status"] = loaded[ArtifactKind::model_report].at("regression_table").value("status", "");
        }
        write_file(manifest_path.string(), manifest.dump(1) + "\n");
        done(Stage::report, std::to_string(files.size() + 1) + " files written, " + std::to_string(omitted.size()) +
                                " omitted");
    }

    /// Regions as GeoJSON features carrying their DL RCA per period.
    static json choropleth(const json& regions, const json& rca_by_region) {
        std::map<std::string, json> props;
        for (const auto& row : rca_by_region.at("rows")) {
            const auto id = row[0].get<std::string>();
            const auto period = row[2].get<std::string>();
            props[id]["rca_" + period] = row[5];
            props[id]["dl_activity_" + period] = row[3];
            props[id]["total_activity_" + period] = row[4];
        }
        json features = json::array();
        for (const auto& r : regions) {
            const auto id = r.at("region_id").get<std::string>();
            json pr = {{"region_id", id}, {"country_code", r.at("country_code")}};
            for (const std::string period : {"t0", "t1"})
                for (const std::string key : {"rca_", "dl_activity_", "total_activity_"}) {
                    const auto it = props.find(id);
                    pr[key + period] = it != props.end() && it->second.contains(key + period) ? it->second[key + period]
                                                                                             : json(nullptr);
                }
            features.push_back({{"type", "Feature"},
                                {"properties", pr},
                                {"geometry", {{"type", "MultiPolygon"}, {"coordinates", r.at("coordinates")}}}});
        }
        return {{"type", "FeatureCollection"}, {"features", features}};
    }

    RunConfig cfg_;
    std::ostream& log_;
    bool force_;
    fs::path out_;
};

/// Process exit code for a failure: 2 missing prerequisite, 3 validation, 1 otherwise.
inline int exit_code_for(const Error& e) {
    static const std::set<std::string> validation = {"invalid_config",    "unreadable_file", "unwritable_file",
                                                     "schema_mismatch",   "incompatible_schema", "empty_registry",
                                                     "invalid_geometry", "locked",          "invalid_argument",
                                                     "invalid_spec"};
    if (e.code() == "missing_prerequisite") return 2;
    return validation.count(e.code()) ? 3 : 1;
}

} // namespace gptgeo::pipeline

#include <cstdlib>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "fixture_support.hpp"
#include "gptgeo/artifact.hpp"
#include "gptgeo/pipeline.hpp"

namespace fs = std::filesystem;
using gptgeo::Error;
using gptgeo::read_file;
using nlohmann::json;

namespace {

std::string error_code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

struct CliResult {
    int status = -1;
    std::string err;
};

/// Runs the CLI binary with stderr captured.
CliResult cli(const std::string& args, const std::string& env = "") {
    const auto err_file = fs::temp_directory_path() / "gptgeo_cli_stderr.txt";
    const std::string cmd = env + " " + GPTGEO_CLI + " " + args + " >/dev/null 2>" + err_file.string();
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read_file(err_file.string())};
}

/// One full fixture run shared by the read-only checks below.
class FullRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        out_ = new fs::path(fixture::scratch("full_run"));
        log_ = new std::string(fixture::run(*out_));
    }
    static void TearDownTestSuite() {
        fs::remove_all(*out_);
        delete out_;
        delete log_;
    }
    static fs::path* out_;
    static std::string* log_;
};
fs::path* FullRun::out_ = nullptr;
std::string* FullRun::log_ = nullptr;

} // namespace

TEST_F(FullRun, WritesEveryArtifactKind) {
    for (auto k : gptgeo::kAllArtifactKinds) {
        const auto p = *out_ / "artifacts" / (std::string(gptgeo::to_string(k)) + ".json");
        ASSERT_TRUE(fs::exists(p)) << p;
        EXPECT_EQ(gptgeo::load_artifact(p.string()).kind, k);
    }
}

TEST_F(FullRun, WritesAllFourteenReportFiles) {
    for (const auto& f : gptgeo::pipeline::report_files()) EXPECT_TRUE(fs::exists(*out_ / "reports" / f)) << f;
    EXPECT_EQ(gptgeo::pipeline::report_files().size(), 14u);
    const auto problems = fixture::report_product_problems(*out_ / "reports");
    EXPECT_TRUE(problems.empty()) << problems.front();
}

TEST_F(FullRun, MatchesFrozenOracleTables) {
    for (const auto& t : fixture::oracle_tables()) {
        const auto problems =
            fixture::compare_csv(*out_ / "reports" / t.file, fixture::expected_dir() / t.file, t.key_cols, 1e-9);
        EXPECT_TRUE(problems.empty()) << t.file << ": " << problems.size() << " problems, first: " << problems.front();
    }
}

TEST_F(FullRun, ManifestDigestsMatchFiles) {
    const auto m = json::parse(read_file((*out_ / "reports" / "manifest.json").string()));
    EXPECT_EQ(m.at("files").size(), 13u);
    EXPECT_TRUE(m.at("omitted").empty());
    for (const auto& f : m.at("files"))
        EXPECT_EQ(f.at("sha256"), gptgeo::file_digest((*out_ / "reports" / f.at("name").get<std::string>()).string()));
    EXPECT_EQ(m.at("seed"), 2012);
    EXPECT_TRUE(m.contains("filters"));
}

TEST_F(FullRun, RegressionTableHasFullShapeEvenWhenNotEstimable) {
    const auto j = json::parse(read_file((*out_ / "reports" / "regression_table.json").string()));
    const auto problems = fixture::regression_table_problems(j);
    EXPECT_TRUE(problems.empty()) << problems.front();
    // Six regions cannot carry the eight-parameter Model 4.
    EXPECT_EQ(j.at("status"), "not_estimable");
}

TEST_F(FullRun, ChoroplethRoundTripsRcaByRegion) {
    const auto geojson = json::parse(read_file((*out_ / "reports" / "choropleth.geojson").string()));
    std::map<std::pair<std::string, std::string>, json> props;
    for (const auto& f : geojson.at("features"))
        for (const std::string period : {"t0", "t1"})
            props[{f["properties"]["region_id"], period}] = f["properties"]["rca_" + period];
    EXPECT_EQ(geojson.at("features").size(), 6u);
    const auto rows = gptgeo::csv::parse(read_file((*out_ / "reports" / "rca_by_region.csv").string()));
    std::size_t checked = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& p = props.at({rows[i][0], rows[i][2]});
        ASSERT_TRUE(p.is_number()) << rows[i][0];
        EXPECT_EQ(p.get<double>(), gptgeo::csv::parse_number(rows[i][5]));
        ++checked;
    }
    EXPECT_EQ(checked, rows.size() - 1);
}

TEST_F(FullRun, SharedIdsResolveAcrossFiles) {
    const auto geojson = json::parse(read_file((*out_ / "reports" / "choropleth.geojson").string()));
    std::set<std::string> regions, countries;
    for (const auto& f : geojson.at("features")) {
        regions.insert(f["properties"]["region_id"].get<std::string>());
        countries.insert(f["properties"]["country_code"].get<std::string>());
    }
    for (const std::string file : {"rca_by_region.csv", "rca_by_country.csv"}) {
        const auto rows = gptgeo::csv::parse(read_file((*out_ / "reports" / file).string()));
        for (std::size_t i = 1; i < rows.size(); ++i) {
            EXPECT_TRUE((file == "rca_by_region.csv" ? regions : countries).count(rows[i][0])) << rows[i][0];
            EXPECT_TRUE(countries.count(rows[i][1])) << rows[i][1];
        }
    }
}

TEST_F(FullRun, LogsEveryStageInOrder) {
    std::size_t at = 0;
    for (auto s : gptgeo::pipeline::kStageOrder) {
        const auto pos = log_->find("stage " + std::string(gptgeo::pipeline::to_string(s)) + ":", at);
        ASSERT_NE(pos, std::string::npos) << *log_;
        at = pos;
    }
    EXPECT_EQ(log_->find("up-to-date"), std::string::npos);
}

TEST_F(FullRun, LockIsReleasedAfterRun) { EXPECT_FALSE(fs::exists(*out_ / ".gptgeo.lock")); }

TEST(Pipeline, RerunSkipsEveryStageAndLeavesTreeUntouched) {
    const auto out = fixture::scratch("rerun");
    fixture::run(out);
    const auto before = fixture::tree_digest(out);
    const auto log = fixture::run(out);
    for (auto s : gptgeo::pipeline::kStageOrder)
        EXPECT_NE(log.find("stage " + std::string(gptgeo::pipeline::to_string(s)) + ": up-to-date, skipped"),
                  std::string::npos)
            << log;
    EXPECT_EQ(fixture::tree_digest(out), before);
    fs::remove_all(out);
}

TEST(Pipeline, IndependentRunsAndForcedRerunsAreByteIdentical) {
    const auto a = fixture::scratch("ident_a");
    const auto b = fixture::scratch("ident_b");
    fixture::run(a);
    fixture::run(b);
    const auto da = fixture::tree_digest(a);
    EXPECT_EQ(da, fixture::tree_digest(b));
    const auto log = fixture::run(a, "", true);
    EXPECT_EQ(log.find("up-to-date"), std::string::npos);
    EXPECT_EQ(fixture::tree_digest(a), da);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Pipeline, MissingPrerequisiteNamesTheArtifact) {
    const auto out = fixture::scratch("missing");
    try {
        fixture::run(out, "metrics");
        FAIL() << "metrics ran without inputs";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "missing_prerequisite");
        EXPECT_NE(std::string(e.what()).find("labeled_corpus"), std::string::npos) << e.what();
        EXPECT_EQ(gptgeo::pipeline::exit_code_for(e), 2);
    }
    fs::remove_all(out);
}

TEST(Pipeline, ConfigChangeInvalidatesCachedStages) {
    const auto out = fixture::scratch("invalidate");
    fixture::run(out);
    gptgeo::ConfigOverrides ov;
    ov.env["LABELING__GAMMA"] = "0.6";
    const auto log = fixture::run(out, "", false, ov);
    // The config hash is part of every stage's provenance, so every stage reruns.
    EXPECT_EQ(log.find("stage label: up-to-date"), std::string::npos) << log;
    const auto labeled = gptgeo::load_artifact((out / "artifacts" / "labeled_corpus.json").string());
    EXPECT_TRUE(labeled.payload.contains("labels"));
    fs::remove_all(out);
}

TEST(Pipeline, MetricsOnlyRunOmitsRegressionAndRelatednessOutputs) {
    const auto out = fixture::scratch("metrics_only");
    for (const std::string s : {"ingest", "link", "geocode", "label", "metrics", "report"}) fixture::run(out, s);
    const auto reports = out / "reports";
    EXPECT_FALSE(fs::exists(reports / "regression_table.json"));
    EXPECT_FALSE(fs::exists(reports / "per_subject_coefficients.csv"));
    EXPECT_FALSE(fs::exists(reports / "relatedness_subjects.csv"));
    EXPECT_TRUE(fs::exists(reports / "rca_by_region.csv"));
    const auto m = json::parse(read_file((reports / "manifest.json").string()));
    std::map<std::string, std::string> omitted;
    for (const auto& o : m.at("omitted")) omitted[o.at("name")] = o.at("reason");
    EXPECT_EQ(omitted.at("regression_table.json"), "missing artifact model_report");
    EXPECT_EQ(omitted.at("per_subject_coefficients.csv"), "missing artifact model_report");
    EXPECT_EQ(omitted.at("relatedness_industry.csv"), "missing artifact relatedness_matrix");
    EXPECT_EQ(omitted.size(), 4u);
    fs::remove_all(out);
}

TEST(Pipeline, ExistingLockRefusesToRun) {
    const auto out = fixture::scratch("locked");
    std::ofstream(out / ".gptgeo.lock") << "other run\n";
    try {
        fixture::run(out, "ingest");
        FAIL() << "ran despite a held lock";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "locked");
        EXPECT_EQ(gptgeo::pipeline::exit_code_for(e), 3);
    }
    EXPECT_TRUE(fs::exists(out / ".gptgeo.lock"));
    EXPECT_FALSE(fs::exists(out / "artifacts"));
    fs::remove_all(out);
}

TEST(Pipeline, EnvironmentOverridesReachTheEffectiveConfig) {
    const auto out = fixture::scratch("env");
    gptgeo::ConfigOverrides ov;
    ov.env["LABELING__GAMMA"] = "0.25";
    ov.env["FILTERS__CONCENTRATION_K_REGION"] = "3";
    const auto cfg = fixture::config_for(out, ov);
    EXPECT_DOUBLE_EQ(cfg.labeling.gamma, 0.25);
    EXPECT_EQ(cfg.concentration_k_region, 3u);
    EXPECT_NE(cfg.hash(), fixture::config_for(out).hash());
    fs::remove_all(out);
}

TEST(Pipeline, OutputDirectoryDoesNotAffectConfigHash) {
    EXPECT_EQ(fixture::config_for("/tmp/a").hash(), fixture::config_for("/tmp/b").hash());
}

TEST(Pipeline, UnknownConfigKeyIsRejected) {
    const auto dir = fixture::scratch("badcfg");
    auto j = json::parse(read_file(fixture::config_path()));
    j["labeling"]["gama"] = 0.3;
    for (const std::string k : {"papers", "registry", "companies", "boundaries", "topic_model", "stopwords"})
        j["inputs"][k] = (fixture::dir() / j["inputs"][k].get<std::string>()).string();
    gptgeo::write_file((dir / "run.json").string(), j.dump());
    EXPECT_EQ(error_code_of([&] { gptgeo::load_config((dir / "run.json").string()); }), "invalid_config");
    fs::remove_all(dir);
}

TEST(Cli, ExitCodesFollowTheErrorClass) {
    const auto out = fixture::scratch("cli");
    const std::string cfg = "--config " + fixture::config_path() + " --out " + out.string();

    auto r = cli("run metrics " + cfg);
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("labeled_corpus"), std::string::npos) << r.err;

    EXPECT_EQ(cli("ingest --config /nonexistent/run.json --out " + out.string()).status, 3);
    EXPECT_EQ(cli("ingest " + cfg + " --no-such-flag").status, 3);
    EXPECT_EQ(cli("bogus " + cfg).status, 3);
    EXPECT_EQ(cli("ingest " + cfg, "GPTGEO_LABELING__UNKNOWN=1").status, 3);

    EXPECT_EQ(cli("run ingest " + cfg).status, 0);
    EXPECT_TRUE(fs::exists(out / "artifacts" / "ingested_corpus.json"));
    EXPECT_EQ(cli("all " + cfg + " --seed 7").status, 0);
    const auto m = json::parse(read_file((out / "reports" / "manifest.json").string()));
    EXPECT_EQ(m.at("seed"), 7);
    fs::remove_all(out);
}

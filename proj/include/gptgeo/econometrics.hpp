#pragma once

// Regional feature table and the nested drivers regressions with
// country-clustered (CR1) standard errors.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gptgeo/csv.hpp"
#include "gptgeo/error.hpp"
#include "gptgeo/metrics.hpp"

namespace gptgeo::econometrics {

/// Upstream measurements for one region before filtering and scaling.
struct RegionInputs {
    std::string region_id;
    std::string country_code;
    std::optional<double> rca_t0;
    std::optional<double> rca_t1;
    std::optional<double> arxiv_sp;
    std::optional<double> crunchbase_sp;
    double arxiv_total = 0.0;      // raw count, logged later
    double crunchbase_total = 0.0; // raw count, logged later
};

struct RegionFeatureRow {
    std::string region_id;
    std::string country_code;
    double rca_t1 = 0.0;
    double rca_t0 = 0.0;
    double arxiv_sp = 0.0;
    double crunchbase_sp = 0.0;
    double arxiv_tot = 0.0;
    double crunchbase_tot = 0.0;
    double is_china = 0.0;

    friend bool operator==(const RegionFeatureRow&, const RegionFeatureRow&) = default;
};

inline const std::vector<std::string>& base_columns() {
    static const std::vector<std::string> cols = {"rca_t1",   "rca_t0",         "arxiv_sp", "crunchbase_sp",
                                                  "arxiv_tot", "crunchbase_tot", "is_china"};
    return cols;
}

inline double column_value(const RegionFeatureRow& r, const std::string& col) {
    if (col == "rca_t1") return r.rca_t1;
    if (col == "rca_t0") return r.rca_t0;
    if (col == "arxiv_sp") return r.arxiv_sp;
    if (col == "crunchbase_sp") return r.crunchbase_sp;
    if (col == "arxiv_tot") return r.arxiv_tot;
    if (col == "crunchbase_tot") return r.crunchbase_tot;
    if (col == "is_china") return r.is_china;
    const auto colon = col.find(':');
    if (colon != std::string::npos)
        return column_value(r, col.substr(0, colon)) * column_value(r, col.substr(colon + 1));
    throw Error("unknown_column", col);
}

inline double& column_ref(RegionFeatureRow& r, const std::string& col) {
    if (col == "rca_t1") return r.rca_t1;
    if (col == "rca_t0") return r.rca_t0;
    if (col == "arxiv_sp") return r.arxiv_sp;
    if (col == "crunchbase_sp") return r.crunchbase_sp;
    if (col == "arxiv_tot") return r.arxiv_tot;
    if (col == "crunchbase_tot") return r.crunchbase_tot;
    if (col == "is_china") return r.is_china;
    throw Error("unknown_column", col);
}

struct FeatureTableOptions {
    double sample_quantile = 0.75; // keep regions with arXiv activity strictly above this nearest-rank quantile
    bool standardize = true;
    std::string china_code = "CN";
};

struct FeatureExclusion {
    std::string region_id;
    std::string reason;
};

struct FeatureTable {
    std::vector<RegionFeatureRow> rows; // region-id order
    std::vector<FeatureExclusion> exclusions;
    double activity_floor = 0.0;
    bool standardized = false;
    std::map<std::string, std::pair<double, double>> scaling; // column -> (mean, sd) before z-scoring
};

/// Sample floor, log totals, then z-scores (sample sd) over the retained
/// rows. The is_china dummy stays 0/1. Interaction terms are formed later
/// from the scaled columns and are not rescaled.
inline FeatureTable build_feature_table(std::span<const RegionInputs> inputs, const FeatureTableOptions& opts = {}) {
    FeatureTable table;
    table.standardized = opts.standardize;
    if (inputs.empty()) return table;
    std::vector<double> totals;
    for (const auto& in : inputs) totals.push_back(in.arxiv_total);
    table.activity_floor = metrics::nearest_rank_quantile(totals, opts.sample_quantile);

    std::vector<const RegionInputs*> sorted;
    for (const auto& in : inputs) sorted.push_back(&in);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->region_id < b->region_id; });

    for (const auto* in : sorted) {
        auto exclude = [&](const char* why) { table.exclusions.push_back({in->region_id, why}); };
        if (!(in->arxiv_total > table.activity_floor)) {
            exclude("below_activity_floor");
            continue;
        }
        if (in->arxiv_total <= 0.0) {
            exclude("zero_arxiv_total");
            continue;
        }
        if (in->crunchbase_total <= 0.0) {
            exclude("zero_crunchbase_total");
            continue;
        }
        if (!in->rca_t0 || !in->rca_t1) {
            exclude("missing_rca");
            continue;
        }
        if (!in->arxiv_sp) {
            exclude("missing_arxiv_sp");
            continue;
        }
        if (!in->crunchbase_sp) {
            exclude("missing_crunchbase_sp");
            continue;
        }
        RegionFeatureRow row;
        row.region_id = in->region_id;
        row.country_code = in->country_code;
        row.rca_t0 = *in->rca_t0;
        row.rca_t1 = *in->rca_t1;
        row.arxiv_sp = *in->arxiv_sp;
        row.crunchbase_sp = *in->crunchbase_sp;
        row.arxiv_tot = std::log(in->arxiv_total);
        row.crunchbase_tot = std::log(in->crunchbase_total);
        row.is_china = in->country_code == opts.china_code ? 1.0 : 0.0;
        table.rows.push_back(row);
    }
    if (!opts.standardize || table.rows.empty()) return table;
    const auto n = static_cast<double>(table.rows.size());
    for (const auto& col : base_columns()) {
        if (col == "is_china") continue;
        double mean = 0.0;
        for (const auto& r : table.rows) mean += column_value(r, col);
        mean /= n;
        double ss = 0.0;
        for (const auto& r : table.rows) ss += (column_value(r, col) - mean) * (column_value(r, col) - mean);
        const double sd = table.rows.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        if (!(sd > 0.0)) throw Error("zero_variance", "column '" + col + "' has zero variance in the retained sample");
        table.scaling[col] = {mean, sd};
        for (auto& r : table.rows) column_ref(r, col) = (column_ref(r, col) - mean) / sd;
    }
    return table;
}

struct OlsFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
    double r2 = 0.0;
    std::size_t n = 0;
    std::size_t k = 0;
};

/// Least squares by column-pivoted QR. `names` label the columns of X for
/// rank-deficiency errors.
inline OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names = {}) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto k = static_cast<std::size_t>(x.cols());
    if (static_cast<std::size_t>(y.size()) != n) throw Error("dimension_mismatch", "y and X row counts differ");
    if (n <= k) throw Error("insufficient_rows", "need more rows (" + std::to_string(n) + ") than columns (" +
                                                      std::to_string(k) + ")");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (static_cast<std::size_t>(qr.rank()) < k) {
        std::string cols;
        const auto& perm = qr.colsPermutation().indices();
        for (auto i = qr.rank(); i < static_cast<Eigen::Index>(k); ++i) {
            const auto c = static_cast<std::size_t>(perm[i]);
            if (!cols.empty()) cols += ", ";
            cols += c < names.size() ? names[c] : "column " + std::to_string(c);
        }
        throw Error("rank_deficient", "design matrix is collinear; dependent column(s): " + cols);
    }
    OlsFit fit;
    fit.n = n;
    fit.k = k;
    fit.coefficients = qr.solve(y);
    fit.residuals = y - x * fit.coefficients;
    const double ssr = fit.residuals.squaredNorm();
    const double sst = (y.array() - y.mean()).matrix().squaredNorm();
    fit.r2 = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
    return fit;
}

/// Liang-Zeger sandwich with the CR1 factor G/(G-1) * (n-1)/(n-k).
inline Eigen::VectorXd clustered_se(const Eigen::MatrixXd& x, const Eigen::VectorXd& residuals,
                                    std::span<const std::string> clusters) {
    const auto n = x.rows();
    const auto k = x.cols();
    if (static_cast<Eigen::Index>(clusters.size()) != n || residuals.size() != n)
        throw Error("dimension_mismatch", "clusters, residuals and X must have the same rows");
    std::map<std::string, Eigen::VectorXd> scores;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto [it, fresh] = scores.try_emplace(clusters[static_cast<std::size_t>(i)], Eigen::VectorXd::Zero(k));
        it->second += x.row(i).transpose() * residuals(i);
    }
    const auto g = static_cast<double>(scores.size());
    if (scores.size() < 2) throw Error("single_cluster", "clustered variance needs at least two clusters");
    if (n <= k) throw Error("insufficient_rows", "clustered variance needs n > k");
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (const auto& [_, s] : scores) meat.noalias() += s * s.transpose();

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd bread = r_inv * r_inv.transpose(); // (X'X)^-1
    const double factor = g / (g - 1.0) * (static_cast<double>(n) - 1.0) / static_cast<double>(n - k);
    const Eigen::MatrixXd v = factor * bread * meat * bread;
    return v.diagonal().cwiseMax(0.0).cwiseSqrt();
}

/// Two-sided p-value under a standard normal reference.
inline double normal_p_value(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

inline std::string significance_stars(double p) {
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.10) return "*";
    return "";
}

struct RegressionSpec {
    std::string name;
    std::string dependent = "rca_t1";
    std::vector<std::string> regressors; // "a:b" denotes an interaction
    std::string cluster_column = "country_code";

    void validate() const {
        std::set<std::string> seen;
        for (const auto& r : regressors) {
            if (!seen.insert(r).second) throw Error("invalid_spec", "duplicate regressor " + r);
            const auto colon = r.find(':');
            const auto check = [&](const std::string& c) {
                if (std::find(base_columns().begin(), base_columns().end(), c) == base_columns().end())
                    throw Error("invalid_spec", "unknown column " + c);
            };
            if (colon == std::string::npos) check(r);
            else {
                check(r.substr(0, colon));
                check(r.substr(colon + 1));
            }
        }
    }
};

struct Coefficient {
    std::string name;
    double estimate = 0.0;
    double se = 0.0;
    double z = 0.0;
    double p = 1.0;
    std::string stars;
};

struct RegressionResult {
    std::string model;
    Coefficient intercept;
    std::vector<Coefficient> coefficients; // spec order
    double r2 = 0.0;
    std::size_t n = 0;
    std::vector<double> residuals;

    const Coefficient* find(const std::string& name) const {
        for (const auto& c : coefficients)
            if (c.name == name) return &c;
        return nullptr;
    }
};

inline Eigen::MatrixXd design_matrix(std::span<const RegionFeatureRow> rows, const std::vector<std::string>& regressors) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(regressors.size() + 1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = 1.0;
        for (std::size_t j = 0; j < regressors.size(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = column_value(rows[i], regressors[j]);
    }
    return x;
}

inline RegressionResult fit_spec(std::span<const RegionFeatureRow> rows, const RegressionSpec& spec) {
    spec.validate();
    if (spec.cluster_column != "country_code") throw Error("invalid_spec", "clusters must come from country_code");
    const auto x = design_matrix(rows, spec.regressors);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    std::vector<std::string> clusters;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y(static_cast<Eigen::Index>(i)) = column_value(rows[i], spec.dependent);
        clusters.push_back(rows[i].country_code);
    }
    std::vector<std::string> names{"const"};
    names.insert(names.end(), spec.regressors.begin(), spec.regressors.end());
    const auto fit = ols_fit(x, y, names);
    const auto se = clustered_se(x, fit.residuals, clusters);

    RegressionResult res;
    res.model = spec.name;
    res.r2 = fit.r2;
    res.n = fit.n;
    res.residuals.assign(fit.residuals.data(), fit.residuals.data() + fit.residuals.size());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        Coefficient c;
        c.name = names[static_cast<std::size_t>(j)];
        c.estimate = fit.coefficients(j);
        c.se = se(j);
        c.z = c.se > 0.0 ? c.estimate / c.se : 0.0;
        c.p = c.se > 0.0 ? normal_p_value(c.z) : 1.0;
        c.stars = significance_stars(c.p);
        if (j == 0) res.intercept = c;
        else res.coefficients.push_back(c);
    }
    return res;
}

/// The four nested specifications, in table order.
inline std::vector<RegressionSpec> model_suite_specs() {
    const std::vector<std::string> m1 = {"rca_t0", "arxiv_sp", "arxiv_tot", "is_china"};
    auto m2 = m1;
    m2.insert(m2.begin() + 2, "crunchbase_sp");
    auto m3 = m2;
    m3.insert(m3.begin() + 3, "arxiv_sp:crunchbase_sp");
    auto m4 = m3;
    m4.insert(m4.begin() + 4, "arxiv_sp:crunchbase_tot");
    return {{"Model 1", "rca_t1", m1}, {"Model 2", "rca_t1", m2}, {"Model 3", "rca_t1", m3}, {"Model 4", "rca_t1", m4}};
}

/// Table row order and display labels.
inline const std::vector<std::pair<std::string, std::string>>& table_rows() {
    static const std::vector<std::pair<std::string, std::string>> rows = {
        {"rca_t0", "RCA_t0"},
        {"arxiv_sp", "arXiv_sp"},
        {"crunchbase_sp", "CrunchBase_sp"},
        {"arxiv_sp:crunchbase_sp", "arXiv_sp x CrunchBase_sp"},
        {"arxiv_sp:crunchbase_tot", "arXiv_sp x CrunchBase_tot"},
        {"arxiv_tot", "arXiv_tot"},
        {"is_china", "is_China"},
    };
    return rows;
}

struct ModelSuiteReport {
    std::vector<RegressionResult> models;
};

inline ModelSuiteReport run_model_suite(const FeatureTable& table) {
    ModelSuiteReport report;
    for (const auto& spec : model_suite_specs()) report.models.push_back(fit_spec(table.rows, spec));
    return report;
}

inline nlohmann::json regression_table_json(const ModelSuiteReport& report, const FeatureTable& table) {
    nlohmann::json j;
    j["dependent"] = "RCA_t1";
    j["standard_errors"] = "clustered by country (CR1)";
    j["stars"] = "*** p<0.01, ** p<0.05, * p<0.10 (normal reference)";
    j["standardized"] = table.standardized;
    j["interactions"] = "products of standardized base columns, not rescaled";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [_, label] : table_rows()) rows.push_back(label);
    j["regressors"] = rows;
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : report.models) {
        nlohmann::json coefs = nlohmann::json::object();
        for (const auto& [key, label] : table_rows()) {
            const auto* c = m.find(key);
            coefs[label] = c ? nlohmann::json{{"coef", c->estimate}, {"se", c->se}, {"p", c->p}, {"stars", c->stars}}
                             : nlohmann::json(nullptr);
        }
        models.push_back({{"name", m.model},
                          {"coefficients", coefs},
                          {"intercept", {{"coef", m.intercept.estimate}, {"se", m.intercept.se}}},
                          {"r2", m.r2},
                          {"n", m.n}});
    }
    j["models"] = models;
    return j;
}

struct SubjectModelRow {
    std::string subject;
    std::string regressor; // display label
    double coefficient = 0.0;
    double se = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n = 0;
    double r2 = 0.0;
};

struct SubjectModelResult {
    std::vector<SubjectModelRow> rows;
    std::vector<std::pair<std::string, std::string>> skipped; // subject, reason
};

/// Fits the full (Model 4) specification once per target subject, each with
/// its own feature table. Reports 95% normal intervals.
inline SubjectModelResult per_subject_models(const std::map<std::string, std::vector<RegionInputs>>& by_subject,
                                             const FeatureTableOptions& opts = {}, std::size_t min_rows = 0) {
    const auto spec = model_suite_specs().back();
    const std::size_t floor_rows = std::max(min_rows, spec.regressors.size() + 2);
    SubjectModelResult out;
    for (const auto& [subject, inputs] : by_subject) {
        try {
            const auto table = build_feature_table(inputs, opts);
            if (table.rows.size() < floor_rows) {
                out.skipped.push_back({subject, "sample_below_floor"});
                continue;
            }
            const auto res = fit_spec(table.rows, spec);
            for (const auto& [key, label] : table_rows()) {
                const auto* c = res.find(key);
                out.rows.push_back({subject, label, c->estimate, c->se, c->estimate - 1.96 * c->se,
                                    c->estimate + 1.96 * c->se, res.n, res.r2});
            }
        } catch (const Error& e) {
            out.skipped.push_back({subject, e.code()});
        }
    }
    return out;
}

inline std::string per_subject_csv(const SubjectModelResult& r) {
    csv::Writer w({"subject", "regressor", "coefficient", "se", "ci_low", "ci_high", "n", "r2"});
    for (const auto& row : r.rows)
        w.row({row.subject, row.regressor, csv::format_number(row.coefficient), csv::format_number(row.se),
               csv::format_number(row.ci_low), csv::format_number(row.ci_high), std::to_string(row.n),
               csv::format_number(row.r2)});
    return w.str();
}

} // namespace gptgeo::econometrics

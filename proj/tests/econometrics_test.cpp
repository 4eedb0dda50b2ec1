#include <gtest/gtest.h>

#include <random>

#include "gptgeo/econometrics.hpp"
#include "oracles.hpp"
#include "simulate.hpp"

using namespace gptgeo;
using namespace gptgeo::econometrics;

namespace {

std::vector<RegionInputs> random_inputs(std::mt19937& rng, std::size_t n, std::size_t countries) {
    std::normal_distribution<double> n01;
    std::vector<RegionInputs> out;
    for (std::size_t i = 0; i < n; ++i) {
        RegionInputs in;
        in.region_id = "r" + std::to_string(1000 + i);
        in.country_code = i % countries == 0 ? "CN" : "K" + std::to_string(i % countries);
        in.rca_t0 = std::abs(n01(rng));
        in.rca_t1 = std::abs(n01(rng)) + 0.3 * *in.rca_t0;
        in.arxiv_sp = std::abs(n01(rng));
        in.crunchbase_sp = std::abs(n01(rng));
        in.arxiv_total = 1.0 + static_cast<double>(rng() % 5000);
        in.crunchbase_total = 1.0 + static_cast<double>(rng() % 300);
        out.push_back(in);
    }
    return out;
}

} // namespace

TEST(FeatureTable, TopQuartileFloor) {
    std::vector<RegionInputs> in;
    for (int i = 1; i <= 8; ++i)
        in.push_back({"r" + std::to_string(i), i % 2 ? "CN" : "US", 1.0 * i, 1.5 * i, 0.2 * i, 0.1 * i * i,
                      10.0 * i, 3.0 * i + (i == 8 ? 1 : 0)});
    const auto t = build_feature_table(in);
    EXPECT_EQ(t.activity_floor, 60.0);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0].region_id, "r7");
    EXPECT_EQ(t.rows[1].region_id, "r8");
    EXPECT_EQ(t.exclusions.size(), 6u);
    EXPECT_EQ(t.rows[0].is_china, 1.0);
    EXPECT_EQ(t.rows[1].is_china, 0.0);
}

TEST(FeatureTable, StandardizedMomentsAndLogs) {
    std::mt19937 rng(3);
    const auto in = random_inputs(rng, 200, 12);
    const auto t = build_feature_table(in);
    ASSERT_GT(t.rows.size(), 10u);
    for (const auto& col : base_columns()) {
        if (col == "is_china") continue;
        double mean = 0, ss = 0;
        for (const auto& r : t.rows) mean += column_value(r, col);
        mean /= static_cast<double>(t.rows.size());
        for (const auto& r : t.rows) ss += std::pow(column_value(r, col) - mean, 2);
        EXPECT_NEAR(mean, 0.0, 1e-12) << col;
        EXPECT_NEAR(std::sqrt(ss / static_cast<double>(t.rows.size() - 1)), 1.0, 1e-12) << col;
    }
    for (const auto& r : t.rows) EXPECT_TRUE(r.is_china == 0.0 || r.is_china == 1.0);

    FeatureTableOptions raw;
    raw.standardize = false;
    const auto u = build_feature_table(in, raw);
    const auto it = std::find_if(in.begin(), in.end(), [&](const RegionInputs& x) { return x.region_id == u.rows[0].region_id; });
    EXPECT_DOUBLE_EQ(u.rows[0].arxiv_tot, std::log(it->arxiv_total));
}

TEST(FeatureTable, ZeroTotalsAndZeroVariance) {
    std::mt19937 rng(5);
    auto in = random_inputs(rng, 40, 5);
    auto top = std::max_element(in.begin(), in.end(), [](auto& a, auto& b) { return a.arxiv_total < b.arxiv_total; });
    top->crunchbase_total = 0.0;
    const auto t = build_feature_table(in);
    EXPECT_TRUE(std::any_of(t.exclusions.begin(), t.exclusions.end(), [&](const FeatureExclusion& e) {
        return e.region_id == top->region_id && e.reason == "zero_crunchbase_total";
    }));
    for (auto& x : in) x.arxiv_sp = 0.5;
    try {
        build_feature_table(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "zero_variance");
        EXPECT_NE(std::string(e.what()).find("arxiv_sp"), std::string::npos);
    }
}

TEST(Ols, ExactLineAndOrthogonalY) {
    Eigen::MatrixXd x(5, 2);
    x << 1, -2, 1, -1, 1, 0, 1, 1, 1, 2;
    Eigen::VectorXd y = 2.0 * x.col(1);
    auto fit = ols_fit(x, y);
    EXPECT_NEAR(fit.coefficients(1), 2.0, 1e-14);
    EXPECT_NEAR(fit.r2, 1.0, 1e-14);
    Eigen::VectorXd orth(5);
    orth << 2, -1, -2, -1, 2;
    fit = ols_fit(x, orth);
    EXPECT_NEAR(fit.coefficients(0), 0.0, 1e-14);
    EXPECT_NEAR(fit.coefficients(1), 0.0, 1e-14);
    EXPECT_NEAR(fit.r2, 0.0, 1e-14);
}

TEST(Ols, FivePointNormalEquations) {
    Eigen::MatrixXd x(5, 3);
    x << 1, 0.5, 2.0, 1, 1.5, -1.0, 1, 2.5, 0.0, 1, 3.0, 1.5, 1, 4.5, -0.5;
    Eigen::VectorXd y(5);
    y << 1.2, 0.4, 2.9, 3.3, 4.1;
    const auto fit = ols_fit(x, y);
    const auto ref = oracle::normal_equations(x, y);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(fit.coefficients(j), ref(j), 1e-10 * std::max(1.0, std::abs(ref(j))));
    EXPECT_LE((x.transpose() * fit.residuals).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ols, RankDeficiencyNamesColumns) {
    Eigen::MatrixXd x(6, 3);
    x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10, 1, 6, 12;
    Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(6, 0, 1);
    try {
        ols_fit(x, y, {"const", "a", "twice_a"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "rank_deficient");
        const std::string msg = e.what();
        EXPECT_TRUE(msg.find("twice_a") != std::string::npos || msg.find(": a") != std::string::npos) << msg;
    }
    EXPECT_THROW(ols_fit(Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(2)), Error);
}

TEST(ClusteredSe, MatchesExplicitSandwich) {
    std::mt19937 rng(21);
    std::normal_distribution<double> n01;
    for (int t = 0; t < 30; ++t) {
        const int n = 60, k = 4;
        Eigen::MatrixXd x(n, k);
        Eigen::VectorXd y(n);
        std::vector<std::string> cl;
        for (int i = 0; i < n; ++i) {
            x(i, 0) = 1;
            for (int j = 1; j < k; ++j) x(i, j) = n01(rng);
            y(i) = x.row(i).sum() + n01(rng);
            cl.push_back("g" + std::to_string(rng() % 7));
        }
        const auto fit = ols_fit(x, y);
        const auto se = clustered_se(x, fit.residuals, cl);
        const auto ref = oracle::cluster_sandwich(x, fit.residuals, cl);
        for (int j = 0; j < k; ++j) EXPECT_NEAR(se(j), ref(j), 1e-10 * ref(j));
    }
}

TEST(ClusteredSe, SingletonClustersEqualRobustSandwich) {
    std::mt19937 rng(22);
    std::normal_distribution<double> n01;
    const int n = 40, k = 3;
    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n);
    std::vector<std::string> cl;
    for (int i = 0; i < n; ++i) {
        x.row(i) << 1, n01(rng), n01(rng);
        y(i) = 1 + x(i, 1) * (1 + std::abs(n01(rng)));
        cl.push_back(std::to_string(i));
    }
    const auto fit = ols_fit(x, y);
    const auto se = clustered_se(x, fit.residuals, cl);
    // Direct formula: (X'X)^-1 (sum e_i^2 x_i x_i') (X'X)^-1 times n/(n-1) * (n-1)/(n-k).
    const Eigen::MatrixXd bread = (x.transpose() * x).inverse();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < n; ++i) meat += fit.residuals(i) * fit.residuals(i) * x.row(i).transpose() * x.row(i);
    const Eigen::MatrixXd v = (static_cast<double>(n) / (n - k)) * bread * meat * bread;
    for (int j = 0; j < k; ++j) EXPECT_NEAR(se(j), std::sqrt(v(j, j)), 1e-10 * se(j));
}

TEST(ClusteredSe, SingleClusterIsFatalAndDuplicationKeepsCoefficients) {
    Eigen::MatrixXd x(4, 2);
    x << 1, 0, 1, 1, 1, 2, 1, 4;
    Eigen::VectorXd y(4);
    y << 0.1, 0.9, 2.2, 3.8;
    const auto fit = ols_fit(x, y);
    const std::vector<std::string> one(4, "A");
    try {
        clustered_se(x, fit.residuals, one);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "single_cluster");
    }
    Eigen::MatrixXd x2(8, 2);
    x2 << x, x;
    Eigen::VectorXd y2(8);
    y2 << y, y;
    const auto fit2 = ols_fit(x2, y2);
    EXPECT_NEAR(fit2.coefficients(0), fit.coefficients(0), 1e-12);
    EXPECT_NEAR(fit2.coefficients(1), fit.coefficients(1), 1e-12);
}

TEST(ClusteredSe, CloseToClassicalUnderIid) {
    std::mt19937 rng(40);
    std::normal_distribution<double> n01;
    double ratio_sum = 0.0;
    int count = 0;
    for (int seed = 0; seed < 100; ++seed) {
        const int n = 400, k = 3;
        Eigen::MatrixXd x(n, k);
        Eigen::VectorXd y(n);
        std::vector<std::string> cl;
        for (int i = 0; i < n; ++i) {
            x.row(i) << 1, n01(rng), n01(rng);
            y(i) = 0.5 + 0.3 * x(i, 1) - 0.2 * x(i, 2) + n01(rng);
            cl.push_back(std::to_string(i % 80));
        }
        const auto fit = ols_fit(x, y);
        const auto se = clustered_se(x, fit.residuals, cl);
        const double s2 = fit.residuals.squaredNorm() / (n - k);
        const Eigen::VectorXd classical = (s2 * (x.transpose() * x).inverse()).diagonal().cwiseSqrt();
        for (int j = 0; j < k; ++j) {
            ratio_sum += se(j) / classical(j);
            ++count;
        }
    }
    EXPECT_NEAR(ratio_sum / count, 1.0, 0.25);
}

TEST(Stars, Thresholds) {
    EXPECT_EQ(significance_stars(0.009), "***");
    EXPECT_EQ(significance_stars(0.01), "**");
    EXPECT_EQ(significance_stars(0.049), "**");
    EXPECT_EQ(significance_stars(0.05), "*");
    EXPECT_EQ(significance_stars(0.10), "");
    EXPECT_NEAR(normal_p_value(1.959963984540054), 0.05, 1e-12);
}

TEST(ModelSuite, SpecsMatchTableLayout) {
    const auto specs = model_suite_specs();
    ASSERT_EQ(specs.size(), 4u);
    EXPECT_EQ(specs[0].regressors, (std::vector<std::string>{"rca_t0", "arxiv_sp", "arxiv_tot", "is_china"}));
    EXPECT_EQ(specs[3].regressors, (std::vector<std::string>{"rca_t0", "arxiv_sp", "crunchbase_sp", "arxiv_sp:crunchbase_sp",
                                                             "arxiv_sp:crunchbase_tot", "arxiv_tot", "is_china"}));
    RegressionSpec bad{"x", "rca_t1", {"rca_t0", "rca_t0"}};
    EXPECT_THROW(bad.validate(), Error);
    RegressionSpec unknown{"x", "rca_t1", {"rca_t0:nothing"}};
    EXPECT_THROW(unknown.validate(), Error);
}

TEST(ModelSuite, NestedR2AndResidualOrthogonality) {
    for (std::uint32_t seed = 1; seed <= 25; ++seed) {
        const auto rows = sim::model4_sample(seed, {}, 120, 15);
        FeatureTable table;
        table.rows = rows;
        const auto report = run_model_suite(table);
        for (std::size_t m = 1; m < report.models.size(); ++m)
            EXPECT_GE(report.models[m].r2, report.models[m - 1].r2 - 1e-12);
        for (std::size_t m = 0; m < report.models.size(); ++m) {
            const auto x = design_matrix(rows, model_suite_specs()[m].regressors);
            const Eigen::Map<const Eigen::VectorXd> e(report.models[m].residuals.data(),
                                                      static_cast<Eigen::Index>(report.models[m].residuals.size()));
            EXPECT_LE((x.transpose() * e).cwiseAbs().maxCoeff(), 1e-8);
        }
        const auto j = regression_table_json(report, table);
        EXPECT_EQ(j["models"].size(), 4u);
        EXPECT_TRUE(j["models"][0]["coefficients"]["CrunchBase_sp"].is_null());
        EXPECT_FALSE(j["models"][3]["coefficients"]["arXiv_sp x CrunchBase_tot"].is_null());
    }
}

TEST(ModelSuite, RawRescalingLeavesStandardizedCoefficients) {
    std::mt19937 rng(50);
    auto in = random_inputs(rng, 300, 20);
    const auto base = run_model_suite(build_feature_table(in));
    for (auto& x : in) {
        *x.arxiv_sp *= 7.5;
        *x.rca_t1 *= 0.01;
    }
    const auto scaled = run_model_suite(build_feature_table(in));
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t c = 0; c < base.models[m].coefficients.size(); ++c)
            EXPECT_NEAR(base.models[m].coefficients[c].estimate, scaled.models[m].coefficients[c].estimate, 1e-10);
}

TEST(ModelSuite, NullSimulationRarelySignificant) {
    sim::TrueModel null_model;
    null_model.intercept = 0.0;
    null_model.beta.assign(7, 0.0);
    std::map<std::string, int> significant;
    for (std::uint32_t seed = 1; seed <= 100; ++seed) {
        FeatureTable table;
        table.rows = sim::model4_sample(1000 + seed, null_model);
        const auto report = run_model_suite(table);
        for (const auto& c : report.models.back().coefficients) significant[c.name] += c.p < 0.01 ? 1 : 0;
    }
    for (const auto& [name, count] : significant) EXPECT_LE(count, 5) << name << " significant at 1% in " << count << " seeds";
}

TEST(PerSubject, ConsistencyAndCiWidths) {
    std::mt19937 rng(60);
    const auto a = random_inputs(rng, 240, 16);
    const auto b = random_inputs(rng, 240, 16);
    const auto c = random_inputs(rng, 240, 16);
    const auto res = per_subject_models({{"DL", a}, {"s1", a}, {"s2", b}, {"s3", c}});
    ASSERT_TRUE(res.skipped.empty());
    const auto model4 = run_model_suite(build_feature_table(a)).models.back();
    std::map<std::string, std::vector<SubjectModelRow>> by;
    for (const auto& r : res.rows) by[r.subject].push_back(r);
    ASSERT_EQ(by.size(), 4u);
    for (std::size_t i = 0; i < by["DL"].size(); ++i) {
        const auto& row = by["DL"][i];
        const auto* coef = model4.find(table_rows()[i].first);
        EXPECT_EQ(row.coefficient, coef->estimate);
        EXPECT_EQ(row.se, coef->se);
        EXPECT_EQ(by["s1"][i].coefficient, row.coefficient);
        EXPECT_EQ(by["s1"][i].se, row.se);
    }
    for (const auto& r : res.rows) {
        EXPECT_NEAR((r.ci_high - r.ci_low) / 2.0, 1.96 * r.se, 1e-10);
        EXPECT_NEAR(r.ci_high - r.coefficient, 1.96 * r.se, 1e-10);
    }
    const auto small = per_subject_models({{"tiny", std::vector<RegionInputs>(a.begin(), a.begin() + 12)}});
    ASSERT_EQ(small.skipped.size(), 1u);
}

#pragma once

// Run configuration: one JSON file, deep-merged over built-in defaults, then
// GPTGEO_* environment overrides, then command-line flags.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptgeo/corpus.hpp"
#include "gptgeo/digest.hpp"
#include "gptgeo/error.hpp"
#include "gptgeo/linkage.hpp"
#include "gptgeo/metrics.hpp"
#include "gptgeo/econometrics.hpp"
#include "gptgeo/relatedness.hpp"
#include "gptgeo/topics.hpp"

namespace gptgeo {

inline const nlohmann::json& default_config() {
    static const nlohmann::json d = nlohmann::json::parse(R"({
  "inputs": {"papers": null, "registry": null, "companies": null, "boundaries": null,
             "topic_model": null, "stopwords": null},
  "output_dir": "out",
  "seed": 2012,
  "ingest": {"min_year": 1990, "max_year": 2030},
  "matching": {"algorithms": ["token_sort_ratio", "partial_ratio"], "min_accept_score": 0.75},
  "preprocessing": {"rare_floor": 5, "ngram_min_count": 10, "max_ngram": 3, "min_tokens": 20,
                    "min_token_length": 2, "stemmer": "plural"},
  "labeling": {"gamma": 0.5, "dl_topic_ids": [], "require_positive_score": true, "rule": "any"},
  "classifier": {"lambda_grid": [0.0001, 0.001, 0.01, 0.1, 1.0], "validation_fraction": 0.2,
                 "min_examples": 50, "threshold": 0.99, "tolerance": 1e-7, "max_iter": 2000},
  "split": {"t0_max_year": 2012},
  "filters": {"country_floor_percentile": 90, "region_floor_percentile": 99, "moving_average_window": 3,
              "impact_min_years": [2009, 2012, 2015], "concentration_k_country": 10,
              "concentration_k_region": 30, "dispersion_top_countries": 50, "dispersion_top_regions": 150},
  "regression": {"sample_quantile": 0.75, "standardize": true, "china_code": "CN", "per_subject_min_rows": 0}
})");
    return d;
}

struct RunConfig {
    nlohmann::json effective;          // merged document, paths absolute
    std::filesystem::path output_dir;
    std::uint64_t seed = 2012;
    std::string papers, registry, companies, boundaries, topic_model;
    std::optional<std::string> stopwords;

    IngestConfig ingest;
    linkage::FuzzyMatchConfig matching;
    topics::PreprocessConfig preprocessing;
    topics::TopicAssignmentConfig labeling;
    relatedness::ClassifierTrainingOptions classifier;
    double classifier_threshold = 0.99;
    metrics::PeriodSplit split;

    double country_floor_percentile = 90, region_floor_percentile = 99;
    int moving_average_window = 3;
    std::vector<int> impact_min_years;
    std::size_t concentration_k_country = 10, concentration_k_region = 30;
    std::size_t dispersion_top_countries = 50, dispersion_top_regions = 150;

    econometrics::FeatureTableOptions regression;
    std::size_t per_subject_min_rows = 0;

    /// SHA-256 of the merged config without the output directory.
    std::string hash() const {
        auto j = effective;
        j.erase("output_dir");
        return sha256_hex(j.dump());
    }
};

namespace detail {

/// Merges `patch` into `base`, rejecting keys the defaults do not know.
inline void merge_known(nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
    if (!patch.is_object()) throw Error("invalid_config", where + " must be an object");
    for (const auto& [key, value] : patch.items()) {
        const auto path = where.empty() ? key : where + "." + key;
        if (!base.contains(key)) throw Error("invalid_config", "unknown config key '" + path + "'");
        auto& slot = base[key];
        if (slot.is_object()) merge_known(slot, value, path);
        else slot = value;
    }
}

template <class T>
T get(const nlohmann::json& j, const std::string& path) {
    const nlohmann::json* cur = &j;
    std::string key;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        cur = &cur->at(key);
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    try {
        return cur->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error("invalid_config", "config key '" + path + "' has the wrong type");
    }
}

inline void set_path(nlohmann::json& j, const std::vector<std::string>& keys, const nlohmann::json& value) {
    nlohmann::json patch = value;
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) patch = nlohmann::json{{*it, patch}};
    merge_known(j, patch, "");
}

} // namespace detail

/// Environment overrides: GPTGEO_<KEY>[__<SUBKEY>] with the value parsed as
/// JSON when possible, else taken as a string. GPTGEO_LABELING__GAMMA=0.4
/// sets labeling.gamma.
inline std::map<std::string, std::string> gptgeo_environment(char** envp) {
    std::map<std::string, std::string> out;
    if (!envp) return out;
    for (char** e = envp; *e; ++e) {
        const std::string kv(*e);
        const auto eq = kv.find('=');
        if (eq == std::string::npos || kv.rfind("GPTGEO_", 0) != 0) continue;
        out[kv.substr(7, eq - 7)] = kv.substr(eq + 1);
    }
    return out;
}

struct ConfigOverrides {
    std::map<std::string, std::string> env; // names without the GPTGEO_ prefix
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
};

inline RunConfig load_config(const std::string& path, const ConfigOverrides& ov = {}) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw Error("invalid_config", "config file not found: " + path);
    const auto doc = nlohmann::json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded()) throw Error("invalid_config", path + " is not valid JSON");
    nlohmann::json j = default_config();
    detail::merge_known(j, doc, "");

    for (const auto& [name, raw] : ov.env) {
        std::vector<std::string> keys;
        std::string lower;
        for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        std::size_t start = 0;
        while (true) {
            const auto sep = lower.find("__", start);
            keys.push_back(lower.substr(start, sep == std::string::npos ? std::string::npos : sep - start));
            if (sep == std::string::npos) break;
            start = sep + 2;
        }
        auto value = nlohmann::json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;
        detail::set_path(j, keys, value);
    }
    if (ov.output_dir) j["output_dir"] = *ov.output_dir;
    if (ov.seed) j["seed"] = *ov.seed;

    const fs::path base = fs::absolute(fs::path(path)).parent_path();
    auto resolve = [&](const nlohmann::json& v) { return (base / v.get<std::string>()).lexically_normal().string(); };
    for (const char* key : {"papers", "registry", "companies", "boundaries", "topic_model", "stopwords"}) {
        auto& v = j["inputs"][key];
        if (v.is_null()) {
            if (std::string(key) == "stopwords") continue;
            throw Error("invalid_config", std::string("inputs.") + key + " is required");
        }
        if (!v.is_string()) throw Error("invalid_config", std::string("inputs.") + key + " must be a path");
        v = resolve(v);
        if (!fs::exists(v.get<std::string>()))
            throw Error("invalid_config", std::string("inputs.") + key + " does not exist: " + v.get<std::string>());
    }
    if (!j["output_dir"].is_string()) throw Error("invalid_config", "output_dir must be a path");
    j["output_dir"] = resolve(j["output_dir"]);

    using detail::get;
    RunConfig c;
    c.effective = j;
    c.output_dir = get<std::string>(j, "output_dir");
    c.seed = get<std::uint64_t>(j, "seed");
    c.papers = get<std::string>(j, "inputs.papers");
    c.registry = get<std::string>(j, "inputs.registry");
    c.companies = get<std::string>(j, "inputs.companies");
    c.boundaries = get<std::string>(j, "inputs.boundaries");
    c.topic_model = get<std::string>(j, "inputs.topic_model");
    if (!j["inputs"]["stopwords"].is_null()) c.stopwords = get<std::string>(j, "inputs.stopwords");

    c.ingest.min_year = get<int>(j, "ingest.min_year");
    c.ingest.max_year = get<int>(j, "ingest.max_year");
    if (c.ingest.min_year > c.ingest.max_year) throw Error("invalid_config", "ingest.min_year exceeds max_year");

    c.matching.algorithms.clear();
    for (const auto& a : get<std::vector<std::string>>(j, "matching.algorithms")) {
        try {
            c.matching.algorithms.push_back(linkage::ratio_algorithm_from_string(a));
        } catch (const Error& e) {
            throw Error("invalid_config", e.what());
        }
    }
    c.matching.min_accept_score = get<double>(j, "matching.min_accept_score");
    c.matching.validate();

    auto& pp = c.preprocessing;
    if (c.stopwords) {
        pp.stopwords.clear();
        std::istringstream words(read_file(*c.stopwords));
        for (std::string w; words >> w;) pp.stopwords.push_back(w);
    }
    pp.rare_floor = get<std::size_t>(j, "preprocessing.rare_floor");
    pp.ngram_min_count = get<std::size_t>(j, "preprocessing.ngram_min_count");
    pp.max_ngram = get<std::size_t>(j, "preprocessing.max_ngram");
    pp.min_tokens = get<std::size_t>(j, "preprocessing.min_tokens");
    pp.min_token_length = get<std::size_t>(j, "preprocessing.min_token_length");
    try {
        pp.stemmer = topics::stemmer_from_string(get<std::string>(j, "preprocessing.stemmer"));
    } catch (const Error& e) {
        throw Error("invalid_config", e.what());
    }
    if (pp.max_ngram < 1) throw Error("invalid_config", "preprocessing.max_ngram must be >= 1");

    c.labeling.gamma = get<double>(j, "labeling.gamma");
    const auto dl_ids = get<std::vector<std::string>>(j, "labeling.dl_topic_ids");
    c.labeling.dl_topic_ids = {dl_ids.begin(), dl_ids.end()};
    if (c.labeling.dl_topic_ids.empty()) throw Error("invalid_config", "labeling.dl_topic_ids must not be empty");
    c.labeling.require_positive_score = get<bool>(j, "labeling.require_positive_score");
    const auto rule = get<std::string>(j, "labeling.rule");
    if (rule != "any" && rule != "all") throw Error("invalid_config", "labeling.rule must be 'any' or 'all'");
    c.labeling.rule = rule == "any" ? topics::DlRule::any : topics::DlRule::all;
    c.labeling.validate();

    auto& cl = c.classifier;
    cl.lambda_grid = get<std::vector<double>>(j, "classifier.lambda_grid");
    if (cl.lambda_grid.empty()) throw Error("invalid_config", "classifier.lambda_grid must not be empty");
    for (double l : cl.lambda_grid)
        if (!(l > 0.0)) throw Error("invalid_config", "classifier.lambda_grid values must be > 0");
    cl.validation_fraction = get<double>(j, "classifier.validation_fraction");
    if (!(cl.validation_fraction > 0.0 && cl.validation_fraction < 1.0))
        throw Error("invalid_config", "classifier.validation_fraction must lie in (0, 1)");
    cl.min_examples = get<std::size_t>(j, "classifier.min_examples");
    cl.fit.tolerance = get<double>(j, "classifier.tolerance");
    cl.fit.max_iter = get<std::size_t>(j, "classifier.max_iter");
    cl.split_seed = c.seed;
    cl.preprocess = pp;
    c.classifier_threshold = get<double>(j, "classifier.threshold");
    if (!(c.classifier_threshold > 0.0 && c.classifier_threshold <= 1.0))
        throw Error("invalid_config", "classifier.threshold must lie in (0, 1]");

    c.split.t0_max_year = get<int>(j, "split.t0_max_year");

    c.country_floor_percentile = get<double>(j, "filters.country_floor_percentile");
    c.region_floor_percentile = get<double>(j, "filters.region_floor_percentile");
    for (double p : {c.country_floor_percentile, c.region_floor_percentile})
        if (!(p >= 0.0 && p <= 100.0)) throw Error("invalid_config", "floor percentiles must lie in [0, 100]");
    c.moving_average_window = get<int>(j, "filters.moving_average_window");
    if (c.moving_average_window < 1 || c.moving_average_window % 2 == 0)
        throw Error("invalid_config", "filters.moving_average_window must be odd and >= 1");
    c.impact_min_years = get<std::vector<int>>(j, "filters.impact_min_years");
    c.concentration_k_country = get<std::size_t>(j, "filters.concentration_k_country");
    c.concentration_k_region = get<std::size_t>(j, "filters.concentration_k_region");
    c.dispersion_top_countries = get<std::size_t>(j, "filters.dispersion_top_countries");
    c.dispersion_top_regions = get<std::size_t>(j, "filters.dispersion_top_regions");
    if (c.concentration_k_country == 0 || c.concentration_k_region == 0)
        throw Error("invalid_config", "concentration k must be >= 1");

    c.regression.sample_quantile = get<double>(j, "regression.sample_quantile");
    if (!(c.regression.sample_quantile >= 0.0 && c.regression.sample_quantile <= 1.0))
        throw Error("invalid_config", "regression.sample_quantile must lie in [0, 1]");
    c.regression.standardize = get<bool>(j, "regression.standardize");
    c.regression.china_code = get<std::string>(j, "regression.china_code");
    c.per_subject_min_rows = get<std::size_t>(j, "regression.per_subject_min_rows");
    return c;
}

} // namespace gptgeo

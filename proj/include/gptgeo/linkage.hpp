#pragma once

// Institute-name resolution: exact match on names/aliases, then a cache of
// earlier decisions, then the best quadratic-mean fuzzy score.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gptgeo/corpus.hpp"
#include "gptgeo/error.hpp"
#include "gptgeo/text.hpp"

namespace gptgeo::linkage {

using text::normalize_title;

/// Unit-cost edit distance over any sequence of comparable elements.
template <class CharT>
std::size_t levenshtein(std::basic_string_view<CharT> a, std::basic_string_view<CharT> b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Edit distance between UTF-8 strings, counted in code points.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
    const auto ua = text::decode_utf8(a);
    const auto ub = text::decode_utf8(b);
    return levenshtein<char32_t>(ua, ub);
}

inline std::string sort_tokens(std::string_view s) {
    auto tokens = text::split_spaces(s);
    std::sort(tokens.begin(), tokens.end());
    return text::join(tokens, " ");
}

/// 1 - lev / max(len, 1) after sorting the space-separated tokens.
inline double token_sort_ratio(std::string_view a, std::string_view b) {
    const auto sa = text::decode_utf8(sort_tokens(a));
    const auto sb = text::decode_utf8(sort_tokens(b));
    const auto len = std::max<std::size_t>({sa.size(), sb.size(), 1});
    return 1.0 - static_cast<double>(levenshtein<char32_t>(sa, sb)) / static_cast<double>(len);
}

/// Best alignment of the shorter string against every same-length window of
/// the longer one. An empty pattern scores 1.
inline double partial_ratio(std::string_view a, std::string_view b) {
    auto ua = text::decode_utf8(a);
    auto ub = text::decode_utf8(b);
    if (ua.size() > ub.size()) std::swap(ua, ub);
    const std::u32string_view pattern = ua;
    const std::u32string_view longer = ub;
    if (pattern.empty()) return 1.0;
    std::size_t best = pattern.size();
    for (std::size_t start = 0; start + pattern.size() <= longer.size(); ++start) {
        best = std::min(best, levenshtein<char32_t>(pattern, longer.substr(start, pattern.size())));
        if (best == 0) break;
    }
    return 1.0 - static_cast<double>(best) / static_cast<double>(pattern.size());
}

enum class RatioAlgorithm { token_sort_ratio, partial_ratio };

inline double apply(RatioAlgorithm algo, std::string_view a, std::string_view b) {
    switch (algo) {
    case RatioAlgorithm::token_sort_ratio: return token_sort_ratio(a, b);
    case RatioAlgorithm::partial_ratio: return partial_ratio(a, b);
    }
    return 0.0;
}

inline RatioAlgorithm ratio_algorithm_from_string(std::string_view s) {
    if (s == "token_sort_ratio") return RatioAlgorithm::token_sort_ratio;
    if (s == "partial_ratio") return RatioAlgorithm::partial_ratio;
    throw Error("invalid_config", "unknown ratio algorithm '" + std::string(s) + "'");
}

inline std::string_view to_string(RatioAlgorithm a) {
    return a == RatioAlgorithm::token_sort_ratio ? "token_sort_ratio" : "partial_ratio";
}

enum class TieBreak { smallest_registry_id };

struct FuzzyMatchConfig {
    std::vector<RatioAlgorithm> algorithms{RatioAlgorithm::token_sort_ratio, RatioAlgorithm::partial_ratio};
    double min_accept_score = 0.75;
    TieBreak tie_break = TieBreak::smallest_registry_id;

    void validate() const {
        if (algorithms.empty()) throw Error("invalid_config", "fuzzy matching needs at least one algorithm");
        if (!(min_accept_score >= 0.0 && min_accept_score <= 1.0))
            throw Error("invalid_config", "min_accept_score must lie in [0, 1]");
    }
};

/// Quadratic mean of per-algorithm ratios: sqrt(sum F_n^2 / N).
inline double combine_scores(std::span<const double> ratios) {
    if (ratios.empty()) throw Error("invalid_config", "no ratios to combine");
    double sum_sq = 0.0;
    for (double f : ratios) sum_sq += f * f;
    return std::sqrt(sum_sq / static_cast<double>(ratios.size()));
}

inline double convolved_score(std::string_view query, std::string_view candidate, const FuzzyMatchConfig& cfg) {
    cfg.validate();
    std::vector<double> ratios;
    ratios.reserve(cfg.algorithms.size());
    for (auto algo : cfg.algorithms) ratios.push_back(apply(algo, query, candidate));
    return combine_scores(ratios);
}

enum class MatchMethod { exact, cached, fuzzy, none };

inline std::string_view to_string(MatchMethod m) {
    switch (m) {
    case MatchMethod::exact: return "exact";
    case MatchMethod::cached: return "cached";
    case MatchMethod::fuzzy: return "fuzzy";
    case MatchMethod::none: return "none";
    }
    return "none";
}

struct MatchResult {
    std::string query_name;
    std::optional<std::string> matched_id;
    double score = 0.0;
    MatchMethod method = MatchMethod::none;

    friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// Registry prepared for matching: normalized names and an exact-match index.
class RegistryIndex {
public:
    struct Candidate {
        std::string registry_id;
        std::vector<std::string> names; // normalized canonical name + aliases
    };

    explicit RegistryIndex(std::span<const InstituteEntry> registry) {
        if (registry.empty()) throw Error("empty_registry", "institute registry is empty");
        candidates_.reserve(registry.size());
        for (const auto& e : registry) {
            Candidate c{e.registry_id, {}};
            auto add = [&](const std::string& raw) {
                auto n = normalize_title(raw);
                if (n.empty() || std::find(c.names.begin(), c.names.end(), n) != c.names.end()) return;
                c.names.push_back(n);
            };
            add(e.canonical_name);
            for (const auto& a : e.aliases) add(a);
            candidates_.push_back(std::move(c));
        }
        std::sort(candidates_.begin(), candidates_.end(),
                  [](const Candidate& x, const Candidate& y) { return x.registry_id < y.registry_id; });
        for (const auto& c : candidates_)
            for (const auto& n : c.names) exact_.try_emplace(n, c.registry_id); // sorted order: smallest id wins
    }

    const std::vector<Candidate>& candidates() const noexcept { return candidates_; }

    const std::string* exact(const std::string& normalized) const {
        const auto it = exact_.find(normalized);
        return it == exact_.end() ? nullptr : &it->second;
    }

private:
    std::vector<Candidate> candidates_;
    std::unordered_map<std::string, std::string> exact_;
};

/// Normalized query -> first computed result. Concurrent misses on the same
/// key converge to whichever result was stored first.
class MatchCache {
public:
    std::optional<MatchResult> find(const std::string& key) const {
        std::lock_guard lock(mu_);
        const auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    MatchResult insert(const std::string& key, MatchResult r) {
        std::lock_guard lock(mu_);
        return entries_.try_emplace(key, std::move(r)).first->second;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, MatchResult> entries_;
};

/// Best fuzzy candidate without consulting exact index or cache. Each
/// registry entry scores as the max over its canonical name and aliases;
/// ties go to the smallest registry id.
inline MatchResult best_fuzzy(const std::string& normalized, const RegistryIndex& index, const FuzzyMatchConfig& cfg) {
    MatchResult best{normalized, std::nullopt, 0.0, MatchMethod::none};
    bool have = false;
    for (const auto& cand : index.candidates()) {
        double s = 0.0;
        for (const auto& n : cand.names) s = std::max(s, convolved_score(normalized, n, cfg));
        if (!have || s > best.score) { // candidates are id-sorted, strict > keeps the smallest id
            best.matched_id = cand.registry_id;
            best.score = s;
            have = true;
        }
    }
    if (!have || best.score < cfg.min_accept_score) {
        best.matched_id.reset();
        best.method = MatchMethod::none;
    } else {
        best.method = MatchMethod::fuzzy;
    }
    return best;
}

inline MatchResult match_institute(std::string_view name, const RegistryIndex& index, MatchCache& cache,
                                   const FuzzyMatchConfig& cfg) {
    const auto normalized = normalize_title(name);
    if (const auto* id = index.exact(normalized)) {
        return MatchResult{normalized, *id, 1.0, MatchMethod::exact};
    }
    if (auto hit = cache.find(normalized)) {
        if (hit->matched_id) hit->method = MatchMethod::cached; // a cached miss stays "none"
        return *hit;
    }
    return cache.insert(normalized, best_fuzzy(normalized, index, cfg));
}

inline MatchResult match_institute(std::string_view name, std::span<const InstituteEntry> registry, MatchCache& cache,
                                   const FuzzyMatchConfig& cfg) {
    return match_institute(name, RegistryIndex(registry), cache, cfg);
}

struct LinkedAffiliation {
    std::string paper_id;
    MatchResult result;
};

struct LinkReport {
    std::size_t affiliations = 0;
    std::optional<double> match_rate; // null when there is nothing to match
    std::map<std::string, std::size_t> counts_by_method;
    std::array<std::size_t, 10> score_histogram{}; // bins [0,0.1), ..., [0.9,1.0]
    double min_accept_score = 0.0;
};

struct LinkedCorpus {
    /// Papers with `resolved_regions` untouched; registry ids per paper below.
    std::vector<PaperRecord> papers;
    std::map<std::string, std::vector<std::string>> registry_ids; // paper id -> sorted unique ids
    std::vector<LinkedAffiliation> links;
    LinkReport report;
};

inline LinkedCorpus link_corpus(std::span<const PaperRecord> papers, std::span<const InstituteEntry> registry,
                                const FuzzyMatchConfig& cfg) {
    cfg.validate();
    LinkedCorpus out;
    out.papers.assign(papers.begin(), papers.end());
    out.report.min_accept_score = cfg.min_accept_score;
    for (auto m : {MatchMethod::exact, MatchMethod::cached, MatchMethod::fuzzy, MatchMethod::none})
        out.report.counts_by_method[std::string(to_string(m))] = 0;
    if (papers.empty()) return out;

    const RegistryIndex index(registry);
    MatchCache cache;
    std::size_t matched = 0;
    for (const auto& p : papers) {
        auto& ids = out.registry_ids[p.id];
        for (const auto& aff : p.affiliations) {
            auto r = match_institute(aff, index, cache, cfg);
            ++out.report.counts_by_method[std::string(to_string(r.method))];
            ++out.report.affiliations;
            const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(r.score * 10.0));
            ++out.report.score_histogram[bin];
            if (r.matched_id) {
                ++matched;
                ids.push_back(*r.matched_id);
            }
            out.links.push_back({p.id, std::move(r)});
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    }
    if (out.report.affiliations > 0)
        out.report.match_rate = static_cast<double>(matched) / static_cast<double>(out.report.affiliations);
    return out;
}

/// Link report CSV: query_name, matched_id, score, method.
inline std::string link_report_csv(const std::vector<LinkedAffiliation>& links) {
    csv::Writer w({"query_name", "matched_id", "score", "method"});
    for (const auto& l : links)
        w.row({l.result.query_name, l.result.matched_id.value_or(""), csv::format_number(l.result.score),
               std::string(to_string(l.result.method))});
    return w.str();
}

inline nlohmann::json link_summary_json(const LinkReport& r) {
    nlohmann::json j;
    j["match_rate"] = r.match_rate ? nlohmann::json(*r.match_rate) : nlohmann::json(nullptr);
    j["counts_by_method"] = r.counts_by_method;
    j["affiliations"] = r.affiliations;
    j["score_histogram"] = r.score_histogram;
    j["min_accept_score"] = r.min_accept_score;
    return j;
}

} // namespace gptgeo::linkage

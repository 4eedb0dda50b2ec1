#pragma once

// Specialization (RCA), citation filters, trend shares and concentration
// measures. All functions are pure over immutable inputs.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gptgeo/error.hpp"
#include "gptgeo/geo.hpp"

namespace gptgeo::metrics {

using geo::ActivityMatrix;

/// Anything with a publication year and a citation count.
template <class T>
concept CitedRecord = requires(const T& r) {
    { r.pub_year } -> std::convertible_to<int>;
    { r.citations } -> std::convertible_to<double>;
};

/// A paper reduced to what the metrics need.
struct AnalysisPaper {
    std::string id;
    int pub_year = 0;
    std::int64_t citations = 0;
    std::set<std::string> subjects;
    bool dl = false;
    std::set<std::string> regions;
    std::set<std::string> countries;
};

struct PeriodSplit {
    int t0_max_year = 2012;

    std::string_view label(int year) const { return year <= t0_max_year ? "t0" : "t1"; }
};

/// Nearest-rank quantile: the smallest value with at least q*n values at or
/// below it. q in [0, 1]; q = 0 returns the minimum.
inline double nearest_rank_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw Error("empty_input", "quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw Error("invalid_argument", "quantile must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-12));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return values[rank - 1];
}

/// Conventional median (mean of the two middle values for even n).
inline double median(std::vector<double> values) {
    if (values.empty()) throw Error("empty_input", "median of an empty sample");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct MedianFilterResult {
    std::vector<std::size_t> kept; // indices into the input, input order
    std::vector<int> dropped_years; // years with fewer than 2 papers
    std::map<int, double> medians;
};

/// Keeps records with citations strictly above their publication year's median.
template <CitedRecord R>
MedianFilterResult above_median_citations(std::span<const R> records) {
    std::map<int, std::vector<double>> by_year;
    for (const auto& r : records) by_year[r.pub_year].push_back(static_cast<double>(r.citations));
    MedianFilterResult out;
    for (const auto& [year, cites] : by_year) {
        if (cites.size() < 2) out.dropped_years.push_back(year);
        else out.medians[year] = median(cites);
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto it = out.medians.find(records[i].pub_year);
        if (it != out.medians.end() && static_cast<double>(records[i].citations) > it->second) out.kept.push_back(i);
    }
    return out;
}

/// Top citation quartile per year, inclusive of the nearest-rank P75 value.
template <CitedRecord R>
std::vector<bool> highly_cited_flags(std::span<const R> records) {
    std::map<int, std::vector<double>> by_year;
    for (const auto& r : records) by_year[r.pub_year].push_back(static_cast<double>(r.citations));
    std::map<int, double> p75;
    for (auto& [year, cites] : by_year) p75[year] = nearest_rank_quantile(cites, 0.75);
    std::vector<bool> flags(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        flags[i] = static_cast<double>(records[i].citations) >= p75.at(records[i].pub_year);
    return flags;
}

/// (A_cat,i / A_all,i) / (A_cat,world / A_all,world).
inline double rca(const ActivityMatrix& m, std::size_t row, std::size_t col) {
    const double loc_total = m.row_total(row);
    const double cat_world = m.col_total(col);
    if (loc_total == 0.0) throw Error("undefined_rca", "location " + m.rows()[row] + " has no activity");
    if (cat_world == 0.0) throw Error("undefined_rca", "category " + m.cols()[col] + " has no activity anywhere");
    return (m.at(row, col) / loc_total) / (cat_world / m.total());
}

inline double rca(const ActivityMatrix& m, std::string_view location, std::string_view category) {
    const auto r = m.row_index(location);
    const auto c = m.col_index(category);
    if (!r) throw Error("undefined_rca", "unknown location " + std::string(location));
    if (!c) throw Error("undefined_rca", "unknown category " + std::string(category));
    return rca(m, *r, *c);
}

struct RcaEntry {
    std::string location;
    std::string category;
    std::string period;
    double value = 0.0;
    double category_activity = 0.0; // A_cat,i
    double location_activity = 0.0; // A_all,i

    friend bool operator==(const RcaEntry&, const RcaEntry&) = default;
};

struct RcaExclusion {
    std::string location; // empty for category-wide exclusions
    std::string category;
    std::string period;
    std::string reason;

    friend bool operator==(const RcaExclusion&, const RcaExclusion&) = default;
};

struct RcaTable {
    std::vector<RcaEntry> entries; // sorted by (period, location, category)
    std::vector<RcaExclusion> exclusions;
    double activity_floor_percentile = 0.0;

    std::optional<double> find(std::string_view location, std::string_view category, std::string_view period) const {
        for (const auto& e : entries)
            if (e.location == location && e.category == category && e.period == period) return e.value;
        return std::nullopt;
    }
};

/// RCA for every (location, category) in each period's matrix. World totals
/// come from the full matrix; locations whose total activity is below the
/// nearest-rank percentile floor of location totals are then dropped.
inline RcaTable rca_table(const std::map<std::string, ActivityMatrix>& by_period, double activity_floor_percentile) {
    if (!(activity_floor_percentile >= 0.0 && activity_floor_percentile <= 100.0))
        throw Error("invalid_argument", "activity floor percentile must lie in [0, 100]");
    RcaTable table;
    table.activity_floor_percentile = activity_floor_percentile;
    for (const auto& [period, m] : by_period) {
        if (m.empty()) continue;
        std::vector<double> totals;
        for (std::size_t r = 0; r < m.rows().size(); ++r) totals.push_back(m.row_total(r));
        const double floor = nearest_rank_quantile(totals, activity_floor_percentile / 100.0);
        for (std::size_t c = 0; c < m.cols().size(); ++c)
            if (m.col_total(c) == 0.0) table.exclusions.push_back({"", m.cols()[c], period, "no_category_activity"});
        for (std::size_t r = 0; r < m.rows().size(); ++r) {
            if (totals[r] == 0.0) {
                table.exclusions.push_back({m.rows()[r], "", period, "no_location_activity"});
                continue;
            }
            if (totals[r] < floor) {
                table.exclusions.push_back({m.rows()[r], "", period, "below_activity_floor"});
                continue;
            }
            for (std::size_t c = 0; c < m.cols().size(); ++c) {
                if (m.col_total(c) == 0.0) continue;
                table.entries.push_back({m.rows()[r], m.cols()[c], period, rca(m, r, c), m.at(r, c), totals[r]});
            }
        }
    }
    return table;
}

/// Similarity-weighted mean of a location's RCA over categories, leaving the
/// target category out. Categories missing from `rca_by_category` count as 0.
inline double related_specialization(const std::map<std::string, double>& rca_by_category,
                                     const std::map<std::string, double>& similarity_to_target,
                                     std::string_view target) {
    double num = 0.0, den = 0.0;
    for (const auto& [cat, sim] : similarity_to_target) {
        if (cat == target) continue;
        if (sim < 0.0) throw Error("invalid_argument", "similarities must be non-negative");
        const auto it = rca_by_category.find(cat);
        num += sim * (it == rca_by_category.end() ? 0.0 : it->second);
        den += sim;
    }
    if (den == 0.0) throw Error("undefined_score", "similarity vector to " + std::string(target) + " is all zero");
    return num / den;
}

struct YearShare {
    int year = 0;
    std::size_t papers = 0;
    std::size_t dl_papers = 0;
    double share = 0.0;
    double moving_average = 0.0;
};

/// Centered moving average over years present in the series; windows are
/// truncated at the edges.
inline void centered_moving_average(std::vector<YearShare>& series, int window) {
    if (window < 1 || window % 2 == 0) throw Error("invalid_argument", "moving-average window must be odd and >= 1");
    const int half = window / 2;
    for (auto& s : series) {
        double sum = 0.0;
        int n = 0;
        for (const auto& o : series)
            if (std::abs(o.year - s.year) <= half) {
                sum += o.share;
                ++n;
            }
        s.moving_average = sum / n;
    }
}

/// Yearly DL share of papers selected by `include` (all papers by default).
inline std::vector<YearShare> dl_share_timeseries(
    std::span<const AnalysisPaper> papers, int window = 3,
    const std::function<bool(const AnalysisPaper&)>& include = [](const AnalysisPaper&) { return true; }) {
    std::map<int, YearShare> by_year;
    for (const auto& p : papers) {
        if (!include(p)) continue;
        auto& y = by_year[p.pub_year];
        y.year = p.pub_year;
        ++y.papers;
        y.dl_papers += p.dl ? 1 : 0;
    }
    std::vector<YearShare> out;
    for (auto& [_, y] : by_year) {
        y.share = static_cast<double>(y.dl_papers) / static_cast<double>(y.papers);
        out.push_back(y);
    }
    if (!out.empty()) centered_moving_average(out, window);
    return out;
}

struct SubjectShare {
    std::string subject;
    std::size_t papers_t0 = 0;
    std::size_t papers_t1 = 0;
    std::size_t dl_t0 = 0;
    std::size_t dl_t1 = 0;
    std::optional<double> share_t0; // null when the subject has no papers in the period
    std::optional<double> share_t1;
    std::size_t rank = 0; // 1 = most active
};

inline std::vector<SubjectShare> subject_share_before_after(std::span<const AnalysisPaper> papers,
                                                            const PeriodSplit& split) {
    std::map<std::string, SubjectShare> by_subject;
    for (const auto& p : papers) {
        const bool t0 = split.label(p.pub_year) == "t0";
        for (const auto& s : p.subjects) {
            auto& e = by_subject[s];
            e.subject = s;
            (t0 ? e.papers_t0 : e.papers_t1) += 1;
            (t0 ? e.dl_t0 : e.dl_t1) += p.dl ? 1 : 0;
        }
    }
    std::vector<SubjectShare> out;
    for (auto& [_, e] : by_subject) {
        if (e.papers_t0) e.share_t0 = static_cast<double>(e.dl_t0) / static_cast<double>(e.papers_t0);
        if (e.papers_t1) e.share_t1 = static_cast<double>(e.dl_t1) / static_cast<double>(e.papers_t1);
        out.push_back(e);
    }
    std::stable_sort(out.begin(), out.end(), [](const SubjectShare& a, const SubjectShare& b) {
        return a.papers_t0 + a.papers_t1 > b.papers_t0 + b.papers_t1;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
    return out;
}

struct ImpactShare {
    std::string subject;
    std::size_t papers = 0;
    std::size_t highly_cited = 0;
    double dl_share_all = 0.0;
    std::optional<double> dl_share_highly_cited;
};

struct ImpactResult {
    int min_year = 0;
    std::vector<ImpactShare> subjects;
    std::vector<std::string> excluded; // subjects with no papers at or after min_year
};

/// Highly-cited flags are computed on the whole corpus (per publication
/// year), then papers before `min_year` are dropped.
inline ImpactResult impact_overrepresentation(std::span<const AnalysisPaper> papers, int min_year) {
    const auto flags = highly_cited_flags(papers);
    std::map<std::string, ImpactShare> by_subject;
    std::map<std::string, std::size_t> dl_all, dl_hc;
    std::set<std::string> all_subjects;
    for (std::size_t i = 0; i < papers.size(); ++i) {
        const auto& p = papers[i];
        all_subjects.insert(p.subjects.begin(), p.subjects.end());
        if (p.pub_year < min_year) continue;
        for (const auto& s : p.subjects) {
            auto& e = by_subject[s];
            e.subject = s;
            ++e.papers;
            dl_all[s] += p.dl ? 1 : 0;
            if (flags[i]) {
                ++e.highly_cited;
                dl_hc[s] += p.dl ? 1 : 0;
            }
        }
    }
    ImpactResult out;
    out.min_year = min_year;
    for (const auto& s : all_subjects) {
        const auto it = by_subject.find(s);
        if (it == by_subject.end()) {
            out.excluded.push_back(s);
            continue;
        }
        auto e = it->second;
        e.dl_share_all = static_cast<double>(dl_all[s]) / static_cast<double>(e.papers);
        if (e.highly_cited) e.dl_share_highly_cited = static_cast<double>(dl_hc[s]) / static_cast<double>(e.highly_cited);
        out.subjects.push_back(e);
    }
    return out;
}

/// Share of total activity held by the k largest locations.
inline double concentration_top_k(std::span<const double> activity, std::size_t k) {
    if (activity.empty()) throw Error("empty_input", "concentration of an empty activity vector");
    std::vector<double> v(activity.begin(), activity.end());
    double total = 0.0;
    for (double a : v) {
        if (a < 0.0) throw Error("invalid_argument", "activity must be non-negative");
        total += a;
    }
    if (total == 0.0) throw Error("empty_input", "total activity is zero");
    if (k >= v.size()) return 1.0;
    std::sort(v.begin(), v.end(), std::greater<>());
    double top = 0.0;
    for (std::size_t i = 0; i < k; ++i) top += v[i];
    return top / total;
}

struct DispersionSummary {
    int year = 0;
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0; // population standard deviation
    double q25 = 0.0;
    double median = 0.0; // nearest-rank P50
    double q75 = 0.0;
    std::map<std::string, double> values; // location -> RCA, for violin plots
};

struct DispersionResult {
    std::vector<DispersionSummary> years;
    std::vector<int> omitted_years;
};

/// Per-year RCA distribution over the `top_n` locations by total activity
/// (ties broken by location id).
inline DispersionResult rca_dispersion(const std::map<int, std::map<std::string, double>>& rca_by_year,
                                       const std::map<std::string, double>& total_activity, std::size_t top_n) {
    std::vector<std::pair<std::string, double>> ranked(total_activity.begin(), total_activity.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::set<std::string> top;
    for (std::size_t i = 0; i < ranked.size() && i < top_n; ++i) top.insert(ranked[i].first);

    DispersionResult out;
    for (const auto& [year, values] : rca_by_year) {
        DispersionSummary s;
        s.year = year;
        std::vector<double> v;
        for (const auto& [loc, r] : values)
            if (top.count(loc)) {
                s.values[loc] = r;
                v.push_back(r);
            }
        if (v.empty()) {
            out.omitted_years.push_back(year);
            continue;
        }
        s.n = v.size();
        for (double x : v) s.mean += x;
        s.mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(v.size()));
        s.q25 = nearest_rank_quantile(v, 0.25);
        s.median = nearest_rank_quantile(v, 0.5);
        s.q75 = nearest_rank_quantile(v, 0.75);
        out.years.push_back(std::move(s));
    }
    return out;
}

} // namespace gptgeo::metrics

#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptgeo/corpus.hpp"
#include "gptgeo/csv.hpp"
#include "gptgeo/error.hpp"

namespace gptgeo::geo {

namespace detail {

inline void check_ring(const Ring& ring) {
    if (auto why = ring_problem(ring); !why.empty())
        throw Error("invalid_geometry", "ring with " + std::to_string(ring.size()) + " vertices: " + why);
}

// x = longitude, y = latitude.
inline bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
    const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    if (cross != 0.0) return false;
    return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) && p.lat >= std::min(a.lat, b.lat) &&
           p.lat <= std::max(a.lat, b.lat);
}

} // namespace detail

/// Even-odd ray casting over all rings of the polygon, so interior rings
/// act as holes. Points on any edge or vertex count as inside.
inline bool point_in_polygon(const GeoPoint& p, const Polygon& polygon) {
    if (polygon.rings.empty()) throw Error("invalid_geometry", "polygon without rings");
    for (const auto& ring : polygon.rings) detail::check_ring(ring);
    for (const auto& ring : polygon.rings)
        for (std::size_t i = 0; i + 1 < ring.size(); ++i)
            if (detail::on_segment(p, ring[i], ring[i + 1])) return true;
    bool inside = false;
    for (const auto& ring : polygon.rings) {
        for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
            const auto& a = ring[i];
            const auto& b = ring[j];
            if ((a.lat > p.lat) != (b.lat > p.lat)) {
                const double x_cross = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
                if (p.lon < x_cross) inside = !inside;
            }
        }
    }
    return inside;
}

inline bool point_in_multipolygon(const GeoPoint& p, std::span<const Polygon> polygons) {
    return std::any_of(polygons.begin(), polygons.end(), [&](const Polygon& poly) { return point_in_polygon(p, poly); });
}

/// Collects non-fatal warnings (ambiguous region hits and the like).
struct Diagnostics {
    std::vector<std::string> warnings;
};

/// Regions with precomputed bounding boxes, sorted by region id.
class RegionIndex {
public:
    explicit RegionIndex(std::span<const Region> regions) : regions_(regions.begin(), regions.end()) {
        std::sort(regions_.begin(), regions_.end(),
                  [](const Region& a, const Region& b) { return a.region_id < b.region_id; });
        for (const auto& r : regions_) {
            Box box;
            for (const auto& poly : r.boundary) {
                if (poly.rings.empty()) throw Error("invalid_geometry", "region " + r.region_id + " has an empty polygon");
                for (const auto& ring : poly.rings) {
                    detail::check_ring(ring);
                    for (const auto& v : ring) box.extend(v);
                }
            }
            boxes_.push_back(box);
            country_[r.region_id] = r.country_code;
        }
    }

    std::optional<std::string> assign(const GeoPoint& p, Diagnostics* diag = nullptr) const {
        std::vector<const Region*> hits;
        for (std::size_t i = 0; i < regions_.size(); ++i) {
            if (!boxes_[i].contains(p)) continue;
            if (point_in_multipolygon(p, regions_[i].boundary)) hits.push_back(&regions_[i]);
        }
        if (hits.empty()) return std::nullopt;
        if (hits.size() > 1 && diag) {
            std::string msg = "ambiguous_region: point (" + csv::format_number(p.lat) + ", " + csv::format_number(p.lon) +
                              ") lies in";
            for (const auto* h : hits) msg += " " + h->region_id;
            msg += "; chose " + hits.front()->region_id;
            diag->warnings.push_back(std::move(msg));
        }
        return hits.front()->region_id; // sorted: smallest id
    }

    const std::string& country_of(const std::string& region_id) const { return country_.at(region_id); }
    const std::vector<Region>& regions() const noexcept { return regions_; }

private:
    struct Box {
        double min_lat = std::numeric_limits<double>::infinity(), max_lat = -std::numeric_limits<double>::infinity();
        double min_lon = std::numeric_limits<double>::infinity(), max_lon = -std::numeric_limits<double>::infinity();
        void extend(const GeoPoint& v) {
            min_lat = std::min(min_lat, v.lat);
            max_lat = std::max(max_lat, v.lat);
            min_lon = std::min(min_lon, v.lon);
            max_lon = std::max(max_lon, v.lon);
        }
        bool contains(const GeoPoint& p) const {
            return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
        }
    };
    std::vector<Region> regions_;
    std::vector<Box> boxes_;
    std::unordered_map<std::string, std::string> country_;
};

inline std::optional<std::string> assign_region(const GeoPoint& p, std::span<const Region> regions,
                                                Diagnostics* diag = nullptr) {
    return RegionIndex(regions).assign(p, diag);
}

enum class Level { country, region };

inline std::string_view to_string(Level l) { return l == Level::country ? "country" : "region"; }

/// Location x category counts. Row and column ids are kept sorted.
class ActivityMatrix {
public:
    ActivityMatrix() = default;

    ActivityMatrix(std::vector<std::string> rows, std::vector<std::string> cols, Level level = Level::region)
        : rows_(std::move(rows)), cols_(std::move(cols)), level_(level) {
        std::sort(rows_.begin(), rows_.end());
        std::sort(cols_.begin(), cols_.end());
        if (std::adjacent_find(rows_.begin(), rows_.end()) != rows_.end() ||
            std::adjacent_find(cols_.begin(), cols_.end()) != cols_.end())
            throw Error("duplicate_id", "activity matrix ids must be unique");
        cells_.assign(rows_.size() * cols_.size(), 0.0);
    }

    const std::vector<std::string>& rows() const noexcept { return rows_; }
    const std::vector<std::string>& cols() const noexcept { return cols_; }
    Level level() const noexcept { return level_; }
    bool empty() const noexcept { return rows_.empty() || cols_.empty(); }

    std::optional<std::size_t> row_index(std::string_view id) const { return find(rows_, id); }
    std::optional<std::size_t> col_index(std::string_view id) const { return find(cols_, id); }

    double at(std::size_t r, std::size_t c) const { return cells_[r * cols_.size() + c]; }

    double at(std::string_view row, std::string_view col) const {
        const auto r = row_index(row);
        const auto c = col_index(col);
        return (r && c) ? at(*r, *c) : 0.0;
    }

    void set(std::size_t r, std::size_t c, double v) {
        if (!(v >= 0.0)) throw Error("invalid_cell", "activity counts must be non-negative");
        cells_[r * cols_.size() + c] = v;
    }

    void add(std::size_t r, std::size_t c, double v) { set(r, c, at(r, c) + v); }

    double row_total(std::size_t r) const {
        double s = 0.0;
        for (std::size_t c = 0; c < cols_.size(); ++c) s += at(r, c);
        return s;
    }

    double col_total(std::size_t c) const {
        double s = 0.0;
        for (std::size_t r = 0; r < rows_.size(); ++r) s += at(r, c);
        return s;
    }

    double total() const {
        double s = 0.0;
        for (double v : cells_) s += v;
        return s;
    }

    friend bool operator==(const ActivityMatrix&, const ActivityMatrix&) = default;

private:
    static std::optional<std::size_t> find(const std::vector<std::string>& ids, std::string_view id) {
        const auto it = std::lower_bound(ids.begin(), ids.end(), id);
        if (it == ids.end() || *it != id) return std::nullopt;
        return static_cast<std::size_t>(it - ids.begin());
    }

    std::vector<std::string> rows_;
    std::vector<std::string> cols_;
    std::vector<double> cells_;
    Level level_ = Level::region;
};

inline void to_json(nlohmann::json& j, const ActivityMatrix& m) {
    std::vector<std::vector<double>> cells(m.rows().size(), std::vector<double>(m.cols().size()));
    for (std::size_t r = 0; r < m.rows().size(); ++r)
        for (std::size_t c = 0; c < m.cols().size(); ++c) cells[r][c] = m.at(r, c);
    j = nlohmann::json{{"level", std::string(to_string(m.level()))},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"cells", cells}};
}

inline void from_json(const nlohmann::json& j, ActivityMatrix& m) {
    const auto level = j.at("level").get<std::string>() == "country" ? Level::country : Level::region;
    auto rows = j.at("rows").get<std::vector<std::string>>();
    auto cols = j.at("cols").get<std::vector<std::string>>();
    const auto cells = j.at("cells").get<std::vector<std::vector<double>>>();
    if (!std::is_sorted(rows.begin(), rows.end()) || !std::is_sorted(cols.begin(), cols.end()) ||
        cells.size() != rows.size())
        throw Error("schema_mismatch", "activity matrix payload is not canonical");
    m = ActivityMatrix(rows, cols, level);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (cells[r].size() != cols.size()) throw Error("schema_mismatch", "ragged activity matrix");
        for (std::size_t c = 0; c < cols.size(); ++c) m.set(r, c, cells[r][c]);
    }
}

/// Wide layout: first column `location`, one column per category.
inline std::string to_wide_csv(const ActivityMatrix& m) {
    std::vector<std::string> header{"location"};
    header.insert(header.end(), m.cols().begin(), m.cols().end());
    csv::Writer w(header);
    for (std::size_t r = 0; r < m.rows().size(); ++r) {
        std::vector<std::string> row{m.rows()[r]};
        for (std::size_t c = 0; c < m.cols().size(); ++c) row.push_back(csv::format_number(m.at(r, c)));
        w.row(row);
    }
    return w.str();
}

/// Long layout: (location, category, count), zero cells omitted.
inline std::string to_long_csv(const ActivityMatrix& m) {
    csv::Writer w({"location", "category", "count"});
    for (std::size_t r = 0; r < m.rows().size(); ++r)
        for (std::size_t c = 0; c < m.cols().size(); ++c)
            if (m.at(r, c) != 0.0) w.row({m.rows()[r], m.cols()[c], csv::format_number(m.at(r, c))});
    return w.str();
}

/// Full counting: each record adds 1 to every (distinct location, distinct
/// category) pair it carries. `locations(rec)` and `categories(rec)` return
/// iterable collections of ids; duplicates within a record count once.
template <class Record, class LocationFn, class CategoryFn>
ActivityMatrix aggregate_activity(std::span<const Record> records, Level level, LocationFn locations,
                                  CategoryFn categories) {
    std::map<std::pair<std::string, std::string>, double> counts;
    std::set<std::string> row_ids, col_ids;
    for (const auto& rec : records) {
        std::set<std::string> locs, cats;
        for (const auto& l : locations(rec)) locs.insert(l);
        for (const auto& c : categories(rec)) cats.insert(c);
        for (const auto& l : locs)
            for (const auto& c : cats) {
                counts[{l, c}] += 1.0;
                row_ids.insert(l);
                col_ids.insert(c);
            }
    }
    ActivityMatrix m({row_ids.begin(), row_ids.end()}, {col_ids.begin(), col_ids.end()}, level);
    for (const auto& [key, v] : counts) m.set(*m.row_index(key.first), *m.col_index(key.second), v);
    return m;
}

/// Paper locations at the requested level, from its resolved regions.
inline std::set<std::string> paper_locations(const PaperRecord& p, Level level, const RegionIndex& index) {
    std::set<std::string> out;
    if (!p.resolved_regions) return out;
    for (const auto& r : *p.resolved_regions) out.insert(level == Level::region ? r : index.country_of(r));
    return out;
}

struct GeocodeReport {
    std::size_t papers_without_region = 0; // the "no_region" bucket
    std::size_t institutes_without_region = 0;
    std::size_t companies_without_region = 0;
    Diagnostics diagnostics;
};

/// Fills `resolved_regions` from the registry locations of each paper's
/// linked institutes.
inline void geocode_papers(std::vector<PaperRecord>& papers,
                           const std::map<std::string, std::vector<std::string>>& registry_ids,
                           std::span<const InstituteEntry> registry, const RegionIndex& index, GeocodeReport& report) {
    std::unordered_map<std::string, std::optional<std::string>> institute_region;
    for (const auto& e : registry) {
        auto r = index.assign(e.location, &report.diagnostics);
        if (!r) ++report.institutes_without_region;
        institute_region.emplace(e.registry_id, std::move(r));
    }
    for (auto& p : papers) {
        std::set<std::string> regions;
        const auto it = registry_ids.find(p.id);
        if (it != registry_ids.end())
            for (const auto& id : it->second) {
                const auto r = institute_region.find(id);
                if (r != institute_region.end() && r->second) regions.insert(*r->second);
            }
        if (regions.empty()) ++report.papers_without_region;
        p.resolved_regions = std::move(regions);
    }
}

inline void geocode_companies(std::vector<CompanyRecord>& companies, const RegionIndex& index, GeocodeReport& report) {
    for (auto& c : companies) {
        c.resolved_region = index.assign(c.location, &report.diagnostics);
        if (!c.resolved_region) ++report.companies_without_region;
    }
}

} // namespace gptgeo::geo

#pragma once

// Shared data model and validated ingestion of the three corpora plus
// region boundaries.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gptgeo/csv.hpp"
#include "gptgeo/error.hpp"

namespace gptgeo {

using json = nlohmann::json;

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct PaperRecord {
    std::string id;
    std::string title;
    std::string abstract;
    std::set<std::string> subjects;
    int pub_year = 0;
    std::int64_t citations = 0;
    std::vector<std::string> affiliations;
    std::optional<std::set<std::string>> resolved_regions;

    friend bool operator==(const PaperRecord&, const PaperRecord&) = default;
};

struct InstituteEntry {
    std::string registry_id;
    std::string canonical_name;
    std::vector<std::string> aliases;
    GeoPoint location;

    friend bool operator==(const InstituteEntry&, const InstituteEntry&) = default;
};

struct CompanyRecord {
    std::string id;
    std::string description;
    std::set<std::string> categories;
    std::optional<int> founded_year;
    GeoPoint location;
    std::optional<std::string> resolved_region;

    friend bool operator==(const CompanyRecord&, const CompanyRecord&) = default;
};

/// Closed ring: first vertex equals last, at least 4 vertices.
using Ring = std::vector<GeoPoint>;

/// rings[0] is the outer boundary, the rest are holes.
struct Polygon {
    std::vector<Ring> rings;

    friend bool operator==(const Polygon&, const Polygon&) = default;
};

struct Region {
    std::string region_id;
    std::string country_code;
    std::vector<Polygon> boundary; // multipolygon

    friend bool operator==(const Region&, const Region&) = default;
};

// ---------------------------------------------------------------------------
// JSON mapping (also used by persisted artifacts)

inline void to_json(json& j, const GeoPoint& p) { j = json{{"lat", p.lat}, {"lon", p.lon}}; }
inline void from_json(const json& j, GeoPoint& p) {
    p.lat = j.at("lat").get<double>();
    p.lon = j.at("lon").get<double>();
}

inline void to_json(json& j, const PaperRecord& p) {
    j = json{{"id", p.id},
             {"title", p.title},
             {"abstract", p.abstract},
             {"subjects", p.subjects},
             {"pub_year", p.pub_year},
             {"citations", p.citations},
             {"affiliations", p.affiliations}};
    j["resolved_regions"] = p.resolved_regions ? json(*p.resolved_regions) : json(nullptr);
}
inline void from_json(const json& j, PaperRecord& p) {
    p.id = j.at("id").get<std::string>();
    p.title = j.at("title").get<std::string>();
    p.abstract = j.at("abstract").get<std::string>();
    p.subjects = j.at("subjects").get<std::set<std::string>>();
    p.pub_year = j.at("pub_year").get<int>();
    p.citations = j.at("citations").get<std::int64_t>();
    p.affiliations = j.at("affiliations").get<std::vector<std::string>>();
    const auto it = j.find("resolved_regions");
    if (it != j.end() && !it->is_null()) p.resolved_regions = it->get<std::set<std::string>>();
    else p.resolved_regions.reset();
}

inline void to_json(json& j, const InstituteEntry& e) {
    j = json{{"registry_id", e.registry_id},
             {"name", e.canonical_name},
             {"aliases", e.aliases},
             {"lat", e.location.lat},
             {"lon", e.location.lon}};
}
inline void from_json(const json& j, InstituteEntry& e) {
    e.registry_id = j.at("registry_id").get<std::string>();
    e.canonical_name = j.at("name").get<std::string>();
    e.aliases = j.at("aliases").get<std::vector<std::string>>();
    e.location = {j.at("lat").get<double>(), j.at("lon").get<double>()};
}

inline void to_json(json& j, const CompanyRecord& c) {
    j = json{{"id", c.id},
             {"description", c.description},
             {"categories", c.categories},
             {"lat", c.location.lat},
             {"lon", c.location.lon}};
    j["founded_year"] = c.founded_year ? json(*c.founded_year) : json(nullptr);
    j["resolved_region"] = c.resolved_region ? json(*c.resolved_region) : json(nullptr);
}
inline void from_json(const json& j, CompanyRecord& c) {
    c.id = j.at("id").get<std::string>();
    c.description = j.at("description").get<std::string>();
    c.categories = j.at("categories").get<std::set<std::string>>();
    c.location = {j.at("lat").get<double>(), j.at("lon").get<double>()};
    const auto fy = j.find("founded_year");
    if (fy != j.end() && !fy->is_null()) c.founded_year = fy->get<int>();
    else c.founded_year.reset();
    const auto rr = j.find("resolved_region");
    if (rr != j.end() && !rr->is_null()) c.resolved_region = rr->get<std::string>();
    else c.resolved_region.reset();
}

// ---------------------------------------------------------------------------
// Ingestion

enum class DatasetKind { papers, registry, companies, boundaries };

struct IngestConfig {
    int min_year = 1990;
    int max_year = 2030;
};

struct Rejection {
    std::size_t line_no = 0; // 1-based line (JSONL) or feature index (GeoJSON)
    std::string reason_code;

    friend bool operator==(const Rejection&, const Rejection&) = default;
};

template <class T>
struct IngestResult {
    std::vector<T> records;
    std::vector<Rejection> rejections;
    std::size_t rows_read = 0;
};

/// Rejection report as CSV (line_no, reason_code).
inline std::string rejection_report_csv(const std::vector<Rejection>& rejections) {
    csv::Writer w({"line_no", "reason_code"});
    for (const auto& r : rejections) w.row({std::to_string(r.line_no), r.reason_code});
    return w.str();
}

namespace detail {

/// Thrown inside row validation; converted into a Rejection.
struct RowReject {
    std::string reason;
};

inline const json& field(const json& row, const char* key) {
    const auto it = row.find(key);
    if (it == row.end()) throw RowReject{"missing_field"};
    return *it;
}

inline std::string string_field(const json& row, const char* key) {
    const auto& v = field(row, key);
    if (!v.is_string()) throw RowReject{"wrong_type"};
    return v.get<std::string>();
}

inline std::vector<std::string> string_list(const json& row, const char* key) {
    const auto& v = field(row, key);
    if (!v.is_array()) throw RowReject{"wrong_type"};
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string()) throw RowReject{"wrong_type"};
        out.push_back(e.get<std::string>());
    }
    return out;
}

inline std::int64_t integer_field(const json& row, const char* key) {
    const auto& v = field(row, key);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::floor(d) == d && std::isfinite(d)) return static_cast<std::int64_t>(d);
    }
    throw RowReject{"wrong_type"};
}

inline double number_field(const json& row, const char* key) {
    const auto& v = field(row, key);
    if (!v.is_number()) throw RowReject{"wrong_type"};
    return v.get<double>();
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline GeoPoint location(const json& row) {
    const double lat = number_field(row, "lat");
    const double lon = number_field(row, "lon");
    if (!(lat >= -90.0 && lat <= 90.0)) throw RowReject{"invalid_latitude"};
    if (!(lon >= -180.0 && lon <= 180.0)) throw RowReject{"invalid_longitude"};
    return {lat, lon};
}

inline const std::string& record_id(const PaperRecord& p) { return p.id; }
inline const std::string& record_id(const InstituteEntry& e) { return e.registry_id; }
inline const std::string& record_id(const CompanyRecord& c) { return c.id; }

/// Runs `parse_row` over each non-blank line of a JSONL file. The first
/// non-blank line must be a JSON object carrying `id_key`; anything else is
/// a schema mismatch and aborts ingestion.
template <class T, class ParseRow>
IngestResult<T> ingest_jsonl(const std::string& path, const char* id_key, ParseRow parse_row) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open " + path);
    IngestResult<T> result;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    bool checked_schema = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++result.rows_read;
        json row = json::parse(line, nullptr, false);
        if (!checked_schema) {
            if (row.is_discarded() || !row.is_object() || !row.contains(id_key)) {
                throw Error("schema_mismatch", path + ": first row is not an object with key '" + id_key + "'");
            }
            checked_schema = true;
        }
        if (row.is_discarded() || !row.is_object()) {
            result.rejections.push_back({line_no, "malformed_json"});
            continue;
        }
        try {
            T rec = parse_row(row);
            const std::string& id = record_id(rec);
            if (!seen.insert(id).second) throw RowReject{"duplicate_id"};
            result.records.push_back(std::move(rec));
        } catch (const RowReject& r) {
            result.rejections.push_back({line_no, r.reason});
        }
    }
    if (in.bad()) throw Error("unreadable_file", "read error on " + path);
    return result;
}

} // namespace detail

inline IngestResult<PaperRecord> ingest_papers(const std::string& path, const IngestConfig& cfg = {}) {
    using namespace detail;
    return ingest_jsonl<PaperRecord>(path, "id", [&](const json& row) {
        PaperRecord p;
        p.id = trim(string_field(row, "id"));
        if (p.id.empty()) throw RowReject{"empty_id"};
        p.title = string_field(row, "title");
        p.abstract = string_field(row, "abstract");
        for (auto& s : string_list(row, "subjects")) {
            auto t = trim(std::move(s));
            if (!t.empty()) p.subjects.insert(std::move(t));
        }
        const auto year = integer_field(row, "pub_year");
        const auto cites = integer_field(row, "citations");
        p.affiliations = string_list(row, "affiliations");
        if (cites < 0) throw RowReject{"negative_citations"};
        if (year < cfg.min_year || year > cfg.max_year) throw RowReject{"year_out_of_range"};
        if (p.subjects.empty()) throw RowReject{"empty_subjects"};
        p.pub_year = static_cast<int>(year);
        p.citations = cites;
        return p;
    });
}

inline IngestResult<InstituteEntry> ingest_registry(const std::string& path, const IngestConfig& = {}) {
    using namespace detail;
    return ingest_jsonl<InstituteEntry>(path, "registry_id", [](const json& row) {
        InstituteEntry e;
        e.registry_id = trim(string_field(row, "registry_id"));
        if (e.registry_id.empty()) throw RowReject{"empty_id"};
        e.canonical_name = trim(string_field(row, "name"));
        if (e.canonical_name.empty()) throw RowReject{"empty_name"};
        if (row.contains("aliases")) e.aliases = string_list(row, "aliases");
        e.location = location(row);
        return e;
    });
}

inline IngestResult<CompanyRecord> ingest_companies(const std::string& path, const IngestConfig& = {}) {
    using namespace detail;
    return ingest_jsonl<CompanyRecord>(path, "id", [](const json& row) {
        CompanyRecord c;
        c.id = trim(string_field(row, "id"));
        if (c.id.empty()) throw RowReject{"empty_id"};
        c.description = string_field(row, "description");
        for (auto& s : string_list(row, "categories")) {
            auto t = trim(std::move(s));
            if (!t.empty()) c.categories.insert(std::move(t));
        }
        const auto fy = row.find("founded_year");
        if (fy != row.end() && !fy->is_null()) c.founded_year = static_cast<int>(integer_field(row, "founded_year"));
        c.location = location(row);
        return c;
    });
}

/// Checks the ring invariants. Returns a reason code, or empty when valid.
inline std::string ring_problem(const Ring& ring) {
    if (ring.size() < 4) return "invalid_geometry";
    if (!(ring.front() == ring.back())) return "invalid_geometry";
    double lo = ring.front().lon, hi = ring.front().lon;
    for (const auto& p : ring) {
        if (!std::isfinite(p.lat) || !std::isfinite(p.lon)) return "invalid_geometry";
        lo = std::min(lo, p.lon);
        hi = std::max(hi, p.lon);
    }
    if (hi - lo > 180.0) return "antimeridian_span";
    return {};
}

/// GeoJSON FeatureCollection of Polygon / MultiPolygon features with
/// properties {region_id, country_code}. Coordinates are [lon, lat].
inline IngestResult<Region> ingest_boundaries(const std::string& path, const IngestConfig& = {}) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
        !doc.contains("features") || !doc["features"].is_array()) {
        throw Error("schema_mismatch", path + ": not a GeoJSON FeatureCollection");
    }
    IngestResult<Region> result;
    std::unordered_set<std::string> seen;
    auto parse_ring = [](const json& coords) {
        if (!coords.is_array()) throw detail::RowReject{"invalid_geometry"};
        Ring ring;
        for (const auto& c : coords) {
            if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
                throw detail::RowReject{"invalid_geometry"};
            ring.push_back({c[1].get<double>(), c[0].get<double>()});
        }
        if (auto why = ring_problem(ring); !why.empty()) throw detail::RowReject{why};
        return ring;
    };
    auto parse_polygon = [&](const json& rings) {
        if (!rings.is_array() || rings.empty()) throw detail::RowReject{"invalid_geometry"};
        Polygon poly;
        for (const auto& r : rings) poly.rings.push_back(parse_ring(r));
        return poly;
    };
    std::size_t index = 0;
    for (const auto& feature : doc["features"]) {
        ++index;
        ++result.rows_read;
        try {
            if (!feature.is_object() || !feature.contains("properties") || !feature.contains("geometry"))
                throw detail::RowReject{"missing_field"};
            const auto& props = feature["properties"];
            Region region;
            region.region_id = detail::trim(detail::string_field(props, "region_id"));
            region.country_code = detail::trim(detail::string_field(props, "country_code"));
            if (region.region_id.empty()) throw detail::RowReject{"empty_id"};
            const auto& geom = feature["geometry"];
            if (!geom.is_object()) throw detail::RowReject{"invalid_geometry"};
            const auto type = geom.value("type", "");
            const auto& coords = detail::field(geom, "coordinates");
            if (type == "Polygon") {
                region.boundary.push_back(parse_polygon(coords));
            } else if (type == "MultiPolygon") {
                if (!coords.is_array() || coords.empty()) throw detail::RowReject{"invalid_geometry"};
                for (const auto& p : coords) region.boundary.push_back(parse_polygon(p));
            } else {
                throw detail::RowReject{"invalid_geometry"};
            }
            if (!seen.insert(region.region_id).second) throw detail::RowReject{"duplicate_id"};
            result.records.push_back(std::move(region));
        } catch (const detail::RowReject& r) {
            result.rejections.push_back({index, r.reason});
        }
    }
    return result;
}

} // namespace gptgeo

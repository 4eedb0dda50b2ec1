#pragma once

// Hand-rolled random generators shared by the property tests and the
// acceptance binary.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "gptgeo/corpus.hpp"

namespace gen {

inline const std::vector<std::string>& name_words() {
    static const std::vector<std::string> w = {
        "university", "institute", "technology", "college", "national", "research", "center",  "school",
        "science",    "state",     "royal",      "federal", "academy",  "medical",  "applied", "polytechnic",
        "oxford",     "cambridge", "berlin",     "munich",  "beijing",  "shanghai", "tokyo",   "kyoto",
        "paris",      "lyon",      "boston",     "austin",  "toronto",  "delhi",    "seoul",   "zurich",
        "madrid",     "rome",      "vienna",     "prague",  "oslo",     "lisbon",   "dublin",  "warsaw"};
    return w;
}

inline std::string random_name(std::mt19937& rng, int min_words = 2, int max_words = 5) {
    const auto& w = name_words();
    const int n = min_words + static_cast<int>(rng() % static_cast<unsigned>(max_words - min_words + 1));
    std::string s;
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + w[rng() % w.size()];
    return s;
}

/// Introduces `edits` random character substitutions, deletions, insertions
/// or transpositions, plus occasional case and punctuation noise.
inline std::string inject_typos(std::string s, std::mt19937& rng, int edits) {
    static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
    for (int e = 0; e < edits && !s.empty(); ++e) {
        const std::size_t pos = rng() % s.size();
        switch (rng() % 4) {
        case 0: s[pos] = letters[rng() % letters.size()]; break;
        case 1: s.erase(pos, 1); break;
        case 2: s.insert(pos, 1, letters[rng() % letters.size()]); break;
        default:
            if (pos + 1 < s.size()) std::swap(s[pos], s[pos + 1]);
        }
    }
    if (rng() % 3 == 0 && !s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    if (rng() % 4 == 0) s += ",";
    return s;
}

inline std::vector<gptgeo::InstituteEntry> random_registry(std::mt19937& rng, std::size_t n) {
    std::vector<gptgeo::InstituteEntry> out;
    for (std::size_t i = 0; i < n; ++i) {
        gptgeo::InstituteEntry e;
        char id[16];
        std::snprintf(id, sizeof id, "grid.%04zu", i);
        e.registry_id = id;
        e.canonical_name = random_name(rng);
        if (rng() % 3 == 0) e.aliases.push_back(random_name(rng, 1, 3));
        e.location = {static_cast<double>(rng() % 180) - 90.0, static_cast<double>(rng() % 360) - 180.0};
        out.push_back(std::move(e));
    }
    return out;
}

/// Star-shaped simple polygon around (clat, clon), optionally with a hole.
inline gptgeo::Polygon random_star_polygon(std::mt19937& rng, double clat, double clon, bool with_hole) {
    std::uniform_real_distribution<double> radius(0.5, 3.0);
    // With a hole, at least 6 vertices keep the 0.2 square inside the outer ring.
    const int k = (with_hole ? 6 : 3) + static_cast<int>(rng() % 8);
    gptgeo::Ring outer;
    for (int i = 0; i < k; ++i) {
        const double angle = 2.0 * 3.14159265358979323846 * (i + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng)) / k;
        const double r = radius(rng);
        outer.push_back({clat + r * std::sin(angle), clon + r * std::cos(angle)});
    }
    outer.push_back(outer.front());
    gptgeo::Polygon poly{{outer}};
    if (with_hole) {
        const double h = 0.2;
        poly.rings.push_back({{clat - h, clon - h}, {clat - h, clon + h}, {clat + h, clon + h}, {clat + h, clon - h},
                              {clat - h, clon - h}});
    }
    return poly;
}

} // namespace gen

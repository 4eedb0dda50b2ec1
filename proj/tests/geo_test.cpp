#include <gtest/gtest.h>

#include <random>

#include "generators.hpp"
#include "gptgeo/geo.hpp"
#include "oracles.hpp"

using namespace gptgeo;
using namespace gptgeo::geo;

namespace {

Polygon square(double lat0, double lon0, double size) {
    return Polygon{{{{lat0, lon0}, {lat0, lon0 + size}, {lat0 + size, lon0 + size}, {lat0 + size, lon0}, {lat0, lon0}}}};
}

Region region(std::string id, std::string cc, Polygon p) { return Region{std::move(id), std::move(cc), {std::move(p)}}; }

struct Rec {
    std::vector<std::string> regions;
    std::vector<std::string> cats;
};

} // namespace

TEST(PointInPolygon, Basics) {
    const auto unit = square(0, 0, 1);
    EXPECT_TRUE(point_in_polygon({0.5, 0.5}, unit));
    EXPECT_FALSE(point_in_polygon({10, 10}, unit));
    EXPECT_TRUE(point_in_polygon({0, 0.5}, unit));
    EXPECT_TRUE(point_in_polygon({1, 1}, unit));
    Polygon degenerate{{{{0, 0}, {1, 1}, {0, 0}}}};
    try {
        point_in_polygon({0, 0}, degenerate);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "invalid_geometry");
    }
}

TEST(PointInPolygon, HolesAreExcluded) {
    auto donut = square(0, 0, 4);
    donut.rings.push_back(square(1, 1, 2).rings[0]);
    EXPECT_FALSE(point_in_polygon({2, 2}, donut));
    EXPECT_TRUE(point_in_polygon({0.5, 0.5}, donut));
    EXPECT_TRUE(point_in_polygon({1, 2}, donut)); // on the hole's edge
}

TEST(PointInPolygon, AgreesWithWindingNumber) {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    int disagreements = 0;
    for (int t = 0; t < 3000; ++t) {
        const auto poly = gen::random_star_polygon(rng, 0, 0, t % 3 == 0);
        const GeoPoint p{u(rng), u(rng)};
        disagreements += point_in_polygon(p, poly) != oracle::contains(p, poly);
    }
    EXPECT_EQ(disagreements, 0);
}

TEST(PointInPolygon, TranslationInvariant) {
    std::mt19937 rng(37);
    auto grid = [&](int range) { return static_cast<double>(static_cast<int>(rng() % (2 * range * 16)) - range * 16) / 16.0; };
    for (int t = 0; t < 2000; ++t) {
        Ring ring;
        const int k = 3 + static_cast<int>(rng() % 5);
        // Convex-ish: points on a coarse circle, snapped to a 1/16 grid.
        for (int i = 0; i < k; ++i) {
            const double a = 2 * 3.14159265358979 * i / k;
            ring.push_back({std::round(3 * std::sin(a) * 16) / 16, std::round(3 * std::cos(a) * 16) / 16});
        }
        ring.push_back(ring.front());
        const GeoPoint p{grid(4), grid(4)};
        const double dlat = static_cast<double>(static_cast<int>(rng() % 100) - 50);
        const double dlon = static_cast<double>(static_cast<int>(rng() % 200) - 100);
        Ring shifted;
        for (const auto& v : ring) shifted.push_back({v.lat + dlat, v.lon + dlon});
        EXPECT_EQ(point_in_polygon(p, Polygon{{ring}}), point_in_polygon({p.lat + dlat, p.lon + dlon}, Polygon{{shifted}}));
    }
}

TEST(AssignRegion, UniqueOceanAndOverlap) {
    const std::vector<Region> regions = {region("r2", "AA", square(0, 0, 2)), region("r1", "AA", square(1, 1, 2)),
                                         region("r3", "BB", square(10, 10, 1))};
    Diagnostics diag;
    EXPECT_EQ(*assign_region({10.5, 10.5}, regions, &diag), "r3");
    EXPECT_FALSE(assign_region({-50, -50}, regions, &diag));
    EXPECT_TRUE(diag.warnings.empty());
    EXPECT_EQ(*assign_region({1.5, 1.5}, regions, &diag), "r1");
    ASSERT_EQ(diag.warnings.size(), 1u);
    EXPECT_NE(diag.warnings[0].find("r1 r2"), std::string::npos);
}

TEST(AggregateActivity, DedupAndFullCounting) {
    const std::vector<Rec> same = {{{"r1", "r1"}, {"cs.CV"}}};
    const auto m1 = aggregate_activity<Rec>(same, Level::region, [](const Rec& r) { return r.regions; },
                                            [](const Rec& r) { return r.cats; });
    EXPECT_EQ(m1.at("r1", "cs.CV"), 1.0);

    const std::vector<Rec> two = {{{"r1", "r2"}, {"cs.CV"}}};
    const auto m2 = aggregate_activity<Rec>(two, Level::region, [](const Rec& r) { return r.regions; },
                                            [](const Rec& r) { return r.cats; });
    EXPECT_EQ(m2.at("r1", "cs.CV"), 1.0);
    EXPECT_EQ(m2.at("r2", "cs.CV"), 1.0);
    EXPECT_EQ(m2.col_total(0), 2.0);

    const auto m3 = aggregate_activity<Rec>(std::span<const Rec>{}, Level::region, [](const Rec& r) { return r.regions; },
                                            [](const Rec& r) { return r.cats; });
    EXPECT_TRUE(m3.empty());
}

TEST(AggregateActivity, ColumnMarginalsCountDistinctRegions) {
    std::mt19937 rng(41);
    const std::vector<std::string> locs = {"a", "b", "c", "d"}, cats = {"x", "y", "z"};
    for (int t = 0; t < 200; ++t) {
        std::vector<Rec> recs(rng() % 30);
        for (auto& r : recs) {
            for (int i = rng() % 4; i >= 0; --i) r.regions.push_back(locs[rng() % locs.size()]);
            for (int i = rng() % 3; i >= 0; --i) r.cats.push_back(cats[rng() % cats.size()]);
        }
        const auto m = aggregate_activity<Rec>(recs, Level::region, [](const Rec& r) { return r.regions; },
                                               [](const Rec& r) { return r.cats; });
        for (const auto& c : cats) {
            double expected = 0.0;
            for (const auto& r : recs)
                if (std::find(r.cats.begin(), r.cats.end(), c) != r.cats.end())
                    expected += static_cast<double>(std::set<std::string>(r.regions.begin(), r.regions.end()).size());
            const auto ci = m.col_index(c);
            EXPECT_EQ(ci ? m.col_total(*ci) : 0.0, expected);
        }
        double sum_rows = 0.0;
        for (std::size_t r = 0; r < m.rows().size(); ++r) sum_rows += m.row_total(r);
        EXPECT_EQ(sum_rows, m.total());
    }
}

TEST(ActivityMatrix, CsvLayouts) {
    ActivityMatrix m({"r2", "r1"}, {"b", "a"});
    m.set(*m.row_index("r1"), *m.col_index("a"), 3);
    EXPECT_EQ(to_wide_csv(m), "location,a,b\nr1,3,0\nr2,0,0\n");
    EXPECT_EQ(to_long_csv(m), "location,category,count\nr1,a,3\n");
    EXPECT_THROW(ActivityMatrix({"x", "x"}, {"a"}), Error);
}

TEST(Geocode, PapersWithoutInstitutesGoToNoRegionBucket) {
    const std::vector<Region> regions = {region("r1", "AA", square(0, 0, 2))};
    const RegionIndex index(regions);
    const std::vector<InstituteEntry> reg = {{"g1", "A", {}, {1, 1}}, {"g2", "B", {}, {50, 50}}};
    std::vector<PaperRecord> papers(3);
    papers[0].id = "p0";
    papers[1].id = "p1";
    papers[2].id = "p2";
    const std::map<std::string, std::vector<std::string>> ids = {{"p0", {"g1"}}, {"p1", {"g2"}}, {"p2", {}}};
    GeocodeReport report;
    geocode_papers(papers, ids, reg, index, report);
    EXPECT_EQ(*papers[0].resolved_regions, std::set<std::string>{"r1"});
    EXPECT_TRUE(papers[1].resolved_regions->empty());
    EXPECT_EQ(report.papers_without_region, 2u);
    EXPECT_EQ(report.institutes_without_region, 1u);
    EXPECT_EQ(paper_locations(papers[0], Level::country, index), std::set<std::string>{"AA"});
}

#include <gtest/gtest.h>

#include <cmath>

#include "mmdemand/grid.hpp"
#include "oracles.hpp"

using namespace mmdemand;

namespace {

LatLon east_of(const GridSpec& g, LatLon p, double meters) {
    return {p.lat, p.lon + meters / g.meters_per_deg_lon};
}

} // namespace

TEST(BuildGrid, SinglePointGivesOneCellContainingIt) {
    const LatLon p{41.82, -71.41};
    const GridSpec g = build_grid(std::span<const LatLon>(&p, 1), 400.0, 0.0);
    EXPECT_EQ(g.rows, 1);
    EXPECT_EQ(g.cols, 1);
    ASSERT_TRUE(locate(g, p).has_value());
    EXPECT_EQ(locate(g, p)->value, 0);
}

TEST(BuildGrid, NineHundredMetersNeedsThreeColumns) {
    const GridSpec probe = GridSpec::fixed({41.82, -71.41}, 400.0, 1, 1);
    const std::vector<LatLon> pts{{41.82, -71.41}, east_of(probe, {41.82, -71.41}, 900.0)};
    const GridSpec g = build_grid(pts, 400.0, 0.0);
    EXPECT_GE(g.cols, 3);
    for (const LatLon& p : pts) EXPECT_TRUE(locate(g, p).has_value());
}

TEST(BuildGrid, RejectsEmptyInputAndBadWidth) {
    EXPECT_THROW(build_grid({}, 400.0, 0.0), std::invalid_argument);
    const LatLon p{41.82, -71.41};
    EXPECT_THROW(build_grid(std::span<const LatLon>(&p, 1), 0.0, 0.0), std::invalid_argument);
}

TEST(Locate, CenterRoundTripsForEveryCell) {
    const GridSpec g = GridSpec::fixed({41.80, -71.45}, 400.0, 12, 12);
    for (std::int32_t i = 0; i < g.cell_count(); ++i) {
        const auto found = locate(g, g.center(CellIndex{i}));
        ASSERT_TRUE(found.has_value());
        EXPECT_EQ(found->value, i);
    }
}

TEST(Locate, OriginCornerAndHalfOpenEdges) {
    const GridSpec g = GridSpec::fixed({41.80, -71.45}, 400.0, 5, 5);
    const LatLon origin{g.origin_lat, g.origin_lon};
    EXPECT_EQ(g.row_col(*locate(g, origin)), (RowCol{0, 0}));
    EXPECT_EQ(g.row_col(*locate(g, east_of(g, origin, 450.0))), (RowCol{0, 1}));
    // The far east edge belongs to no cell.
    EXPECT_FALSE(locate(g, east_of(g, origin, 2000.0 + 1e-3)).has_value());
    EXPECT_FALSE(locate(g, {origin.lat - 1e-6, origin.lon}).has_value());
}

TEST(Distances, HaversineAndProjectionAgreeAtCityScale) {
    const LatLon a{41.82, -71.41};
    const LatLon b{41.83, -71.40};
    const double h = haversine_meters(a, b);
    EXPECT_NEAR(equirectangular_meters(a, b), h, h * 1e-3);
    EXPECT_NEAR(haversine_meters(a, a), 0.0, 1e-9);
}

TEST(DistanceClasses, DefaultParametersGiveFiveClasses) {
    const GridSpec g = GridSpec::fixed({41.8, -71.4}, 400.0, 12, 12);
    const DistanceClassTable t(g, 1000.0);
    const std::vector<double> expected{0.0, 400.0, 400.0 * std::sqrt(2.0), 800.0, 400.0 * std::sqrt(5.0)};
    ASSERT_EQ(t.classes().size(), expected.size());
    for (std::size_t l = 0; l < expected.size(); ++l) EXPECT_NEAR(t.classes()[l], expected[l], 1e-9);
    ASSERT_EQ(t.boundaries().size(), t.classes().size() + 1);
    EXPECT_DOUBLE_EQ(t.boundaries().back(), 1000.0);
}

TEST(DistanceClasses, MatchLatticeEnumeration) {
    for (double width : {150.0, 200.0, 250.0, 400.0, 600.0}) {
        for (double dmax : {0.0, 500.0, 1000.0, 1500.0, 2000.0}) {
            const GridSpec g = GridSpec::fixed({41.8, -71.4}, width, 20, 20);
            const DistanceClassTable t(g, dmax);
            const auto expected = oracle::lattice_distances(width, dmax);
            ASSERT_EQ(t.classes().size(), expected.size()) << width << " " << dmax;
            for (std::size_t l = 0; l < expected.size(); ++l) EXPECT_NEAR(t.classes()[l], expected[l], 1e-6);
        }
    }
}

TEST(DistanceClasses, ZeroMaxDistanceLeavesOnlySameCell) {
    const GridSpec g = GridSpec::fixed({41.8, -71.4}, 400.0, 3, 3);
    const DistanceClassTable t(g, 0.0);
    ASSERT_EQ(t.class_count(), 1u);
    EXPECT_EQ(t.classes()[0], 0.0);
}

TEST(DistanceClasses, CornerCellHasTwoFirstRingNeighbours) {
    const GridSpec g = GridSpec::fixed({41.8, -71.4}, 400.0, 12, 12);
    const DistanceClassTable t(g, 1000.0);
    EXPECT_EQ(t.neighbors(g, CellIndex{0}, 1).size(), 2u);
    EXPECT_EQ(t.neighbors(g, g.index({6, 6}), 1).size(), 4u);
    EXPECT_EQ(t.neighbors(g, g.index({6, 6}), 2).size(), 4u);
    EXPECT_EQ(t.neighbors(g, g.index({6, 6}), 4).size(), 8u);
}

TEST(DistanceClasses, ClassBetweenIsSymmetricAndTruncated) {
    const GridSpec g = GridSpec::fixed({41.8, -71.4}, 400.0, 8, 8);
    const DistanceClassTable t(g, 1000.0);
    for (std::int32_t a = 0; a < g.cell_count(); a += 3) {
        for (std::int32_t b = 0; b < g.cell_count(); b += 5) {
            const auto ab = t.class_between(g, {a}, {b});
            EXPECT_EQ(ab, t.class_between(g, {b}, {a}));
            const RowCol ra = g.row_col({a}), rb = g.row_col({b});
            const double d = 400.0 * std::hypot(ra.row - rb.row, ra.col - rb.col);
            EXPECT_EQ(ab.has_value(), d < 1000.0);
            if (ab) EXPECT_NEAR(t.classes()[*ab], d, 1e-6);
        }
    }
}

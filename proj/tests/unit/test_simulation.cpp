#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "mmdemand/simulation.hpp"

using namespace mmdemand;

namespace {

const DistanceClassTable& classes400() {
    static const Layout layout = layout_grid(400.0);
    static const DistanceClassTable classes(layout.grid, 1000.0);
    return classes;
}

} // namespace

TEST(Layout, ClustersBordersAndIsolatedCells) {
    const Layout l = layout_grid(400.0);
    EXPECT_EQ(l.grid.rows, 12);
    EXPECT_EQ(l.grid.cols, 12);
    std::vector<CellIndex> centers;
    for (std::int32_t c = 0; c < l.grid.cell_count(); ++c) {
        if (l.kind({c}) == CellKind::cluster_center) centers.push_back({c});
    }
    ASSERT_EQ(centers.size(), 3u);
    std::size_t borders = 0, isolated = 0;
    for (std::int32_t c = 0; c < l.grid.cell_count(); ++c) {
        const RowCol rc = l.grid.row_col({c});
        bool adjacent = false;
        double nearest = 1e18;
        for (CellIndex z : centers) {
            const RowCol zc = l.grid.row_col(z);
            adjacent |= (rc.row != zc.row || rc.col != zc.col) && std::abs(rc.row - zc.row) <= 1 &&
                        std::abs(rc.col - zc.col) <= 1;
            nearest = std::min(nearest, 400.0 * std::hypot(rc.row - zc.row, rc.col - zc.col));
        }
        if (l.kind({c}) == CellKind::border) {
            ++borders;
            EXPECT_TRUE(adjacent);
        }
        if (l.kind({c}) == CellKind::isolated) {
            ++isolated;
            EXPECT_GT(nearest, 1000.0);
        }
        if (adjacent) EXPECT_EQ(l.kind({c}), CellKind::border);
    }
    EXPECT_EQ(borders, 24u);
    EXPECT_GE(isolated, 1u);
    EXPECT_EQ(true_rate(CellKind::cluster_center), 10.0);
    EXPECT_EQ(true_rate(CellKind::border), 5.0);
    EXPECT_EQ(true_rate(CellKind::isolated), 2.0);
    EXPECT_EQ(true_rate(CellKind::none), 0.0);
}

TEST(Simulate, FullStockingKeepsEveryTripInItsCell) {
    const Layout l = layout_grid(400.0);
    const auto dist = make_threshold_distribution(0.7, classes400());
    const SimulatedData d = simulate_days(l, 1.0, dist, classes400(), 5, {10, 1000});
    EXPECT_EQ(d.trips.size(), d.arrivals);
    for (const TripEvent& t : d.trips) EXPECT_GT(l.rate(t.cell), 0.0);
}

TEST(Simulate, SameSeedSameData) {
    const Layout l = layout_grid(400.0);
    const auto dist = make_threshold_distribution(0.7, classes400());
    const SimulatedData a = simulate_days(l, 0.4, dist, classes400(), 11, {5, 1000});
    const SimulatedData b = simulate_days(l, 0.4, dist, classes400(), 11, {5, 1000});
    ASSERT_EQ(a.trips.size(), b.trips.size());
    for (std::size_t k = 0; k < a.trips.size(); ++k) {
        EXPECT_EQ(a.trips[k].cell, b.trips[k].cell);
        EXPECT_EQ(a.trips[k].time, b.trips[k].time);
    }
    EXPECT_EQ(a.realized_rate, b.realized_rate);
}

TEST(Simulate, ArrivalCountsHaveTheTrueMean) {
    const Layout l = layout_grid(400.0);
    const auto dist = make_threshold_distribution(0.7, classes400());
    const std::int32_t days = 200;
    const SimulatedData d = simulate_days(l, 1.0, dist, classes400(), 13, {days, 1000});
    double expected = 0.0;
    for (std::int32_t c = 0; c < l.grid.cell_count(); ++c) expected += l.rate({c});
    const double mean = static_cast<double>(d.arrivals) / days;
    // Poisson total: standard error sqrt(expected / days)
    EXPECT_NEAR(mean, expected, 4.0 * std::sqrt(expected / days));
    for (std::int32_t c = 0; c < l.grid.cell_count(); ++c) {
        if (l.rate({c}) == 0.0) EXPECT_EQ(d.realized_rate[static_cast<std::size_t>(c)], 0.0);
    }
}

TEST(Simulate, NoStockingLeavesOnlyCenters) {
    const Layout l = layout_grid(400.0);
    const auto dist = make_threshold_distribution(0.7, classes400());
    const SimulatedData d = simulate_days(l, 0.0, dist, classes400(), 17, {5, 1000});
    for (const TripEvent& t : d.trips) EXPECT_EQ(l.kind(t.cell), CellKind::cluster_center);
    EXPECT_LT(d.trips.size(), d.arrivals);
}

TEST(Experiment, SmallSweepHasTheExpectedShape) {
    ExperimentConfig cfg;
    cfg.days = 5;
    cfg.replications = 2;
    cfg.p_values = {0.0, 1.0};
    const ExperimentReport r = run_experiment(cfg);
    EXPECT_EQ(r.replications.size(), 4u);
    EXPECT_TRUE(r.trends.full_availability_agreement);
    EXPECT_TRUE(r.trends.zero_availability_pattern);
    for (const auto& rep : r.replications) {
        if (rep.p == 1.0) EXPECT_LE(rep.em_naive_gap, 1e-6);
    }
    std::ostringstream table;
    r.print_table(table);
    EXPECT_NE(table.str().find("Naive"), std::string::npos);
    EXPECT_EQ(table.str().find("PASS"), std::string::npos);
}

TEST(Experiment, InvalidConfigIsRejected) {
    ExperimentConfig cfg;
    cfg.p_values = {1.5};
    EXPECT_ANY_THROW(cfg.validate());
    cfg = ExperimentConfig{};
    cfg.replications = 0;
    EXPECT_ANY_THROW(cfg.validate());
}

TEST(Sensitivity, TwoPointErrorsGrowWithGamma) {
    const PreparedInput data = two_point_fixture(20);
    const ModelInputs model = build_model_inputs(data.timeline, data.trips, 0.7, 1000.0);
    EMConfig em;
    const SensitivityReport r = sensitivity_study(data, model, {0.0, 0.5, 1.0}, em);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_EQ(r.rows[0].largest, 0.0);
    EXPECT_GT(r.rows[2].largest, 0.0);
    for (std::size_t k = 1; k < r.rows.size(); ++k) {
        EXPECT_GE(r.rows[k].largest, r.rows[k - 1].largest);
        EXPECT_GE(r.rows[k].median, r.rows[k - 1].median);
    }
}

TEST(Synthetic, WritesRequestedRowsInBothStyles) {
    SyntheticConfig sc;
    sc.trips = 500;
    sc.days = 3;
    std::ostringstream snake;
    write_synthetic_trips(snake, sc);
    sc.kc_style = true;
    sc.vehicles = 0;
    std::ostringstream kc;
    write_synthetic_trips(kc, sc);
    const auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
    EXPECT_EQ(lines(snake.str()), 501);
    EXPECT_EQ(lines(kc.str()), 501);
    EXPECT_EQ(kc.str().rfind("Trip ID", 0), 0u);
    EXPECT_NE(snake.str().substr(0, snake.str().find('\n')).find("vehicle_id"), std::string::npos);
}

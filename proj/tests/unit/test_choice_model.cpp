#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mmdemand/choice_model.hpp"
#include "mmdemand/error.hpp"
#include "oracles.hpp"

using namespace mmdemand;

namespace {

DistanceClassTable default_table(double width = 400.0, double dmax = 1000.0) {
    return DistanceClassTable(GridSpec::fixed({41.8, -71.4}, width, 12, 12), dmax);
}

} // namespace

TEST(ThresholdDistribution, MassesSumToOneAndFirstBinIsP0) {
    const auto t = default_table();
    for (double p0 : {0.5, 0.7}) {
        const auto d = make_threshold_distribution(p0, t);
        const double sum = std::accumulate(d.class_probs().begin(), d.class_probs().end(), 0.0);
        EXPECT_NEAR(sum, 1.0, 1e-12);
        EXPECT_NEAR(d.class_probs()[0], p0, 1e-4);
    }
}

TEST(ThresholdDistribution, MassesMatchIntegratedDensity) {
    const auto t = default_table();
    const double sigma = solve_sigma(0.7, t);
    const auto d = ThresholdDistribution::half_normal(sigma, t);
    const auto& b = t.boundaries();
    const double total = oracle::half_normal_mass(sigma, 0.0, b.back());
    for (std::size_t l = 0; l < d.class_count(); ++l) {
        EXPECT_NEAR(d.class_probs()[l], oracle::half_normal_mass(sigma, b[l], b[l + 1]) / total, 1e-9);
    }
}

TEST(ThresholdDistribution, SurvivalDifferencesAreClassMasses) {
    const auto d = make_threshold_distribution(0.6, default_table(250.0, 1500.0));
    for (std::size_t l = 0; l < d.class_count(); ++l) {
        EXPECT_NEAR(d.survival_at(l) - d.survival_at(l + 1), d.class_probs()[l], 1e-15);
    }
    EXPECT_DOUBLE_EQ(d.survival_at(0), 1.0);
}

TEST(ThresholdDistribution, SingleClassIsTrivial) {
    const auto t = default_table(400.0, 300.0);
    ASSERT_EQ(t.class_count(), 1u);
    const auto d = ThresholdDistribution::half_normal(123.0, t);
    ASSERT_EQ(d.class_probs().size(), 1u);
    EXPECT_DOUBLE_EQ(d.class_probs()[0], 1.0);
}

TEST(ThresholdDistribution, FlattensTowardWidthProportionsAsSigmaGrows) {
    const auto t = default_table();
    const auto& b = t.boundaries();
    double previous = std::numeric_limits<double>::infinity();
    for (double sigma : {200.0, 500.0, 2000.0, 10000.0, 100000.0}) {
        const auto d = ThresholdDistribution::half_normal(sigma, t);
        double gap = 0.0;
        for (std::size_t l = 0; l < d.class_count(); ++l) {
            gap = std::max(gap, std::abs(d.class_probs()[l] - (b[l + 1] - b[l]) / b.back()));
        }
        EXPECT_LT(gap, previous);
        previous = gap;
    }
    EXPECT_LT(previous, 1e-3);
}

TEST(SolveSigma, ConcentratesAsP0ApproachesOne) {
    const auto d = make_threshold_distribution(0.9999, default_table());
    EXPECT_LT(d.survival_at(1), 2e-4);
}

TEST(SolveSigma, LowerP0HasHeavierTail) {
    const auto t = default_table();
    const auto half = make_threshold_distribution(0.5, t);
    const auto seventy = make_threshold_distribution(0.7, t);
    EXPECT_GT(half.survival_at(1), seventy.survival_at(1));
    EXPECT_GT(half.sigma(), seventy.sigma());
}

TEST(SolveSigma, RejectsUnachievableP0WithRange) {
    const auto t = default_table();
    try {
        solve_sigma(0.2, t);
        FAIL() << "expected InfeasibleParameterError";
    } catch (const InfeasibleParameterError& e) {
        EXPECT_NEAR(e.achievable_low(), 0.4, 1e-3);
        EXPECT_DOUBLE_EQ(e.achievable_high(), 1.0);
    }
}

TEST(SolveSigma, P0OfOneKeepsUsersInTheirOwnCell) {
    const auto d = make_threshold_distribution(1.0, default_table());
    EXPECT_DOUBLE_EQ(d.class_probs()[0], 1.0);
    EXPECT_DOUBLE_EQ(d.survival_at(1), 0.0);
}

TEST(Sampling, FirstBinFrequencyWithinBinomialBand) {
    const auto d = make_threshold_distribution(0.7, default_table());
    std::mt19937_64 rng(99);
    const int n = 1000000;
    int first = 0;
    for (int k = 0; k < n; ++k) first += d.sample(rng) == 0 ? 1 : 0;
    // 0.002 is about 4.4 standard errors at this sample size.
    EXPECT_NEAR(static_cast<double>(first) / n, d.class_probs()[0], 0.002);
}

TEST(Sampling, FixedSeedRepeats) {
    const auto d = make_threshold_distribution(0.7, default_table());
    std::mt19937_64 a(5), b(5);
    for (int k = 0; k < 1000; ++k) EXPECT_EQ(d.sample(a), d.sample(b));
}

TEST(Sampling, SingleBinAlwaysReturnsZero) {
    const auto d = ThresholdDistribution::half_normal(100.0, default_table(400.0, 100.0));
    std::mt19937_64 rng(1);
    for (int k = 0; k < 100; ++k) EXPECT_EQ(d.sample(rng), 0u);
}

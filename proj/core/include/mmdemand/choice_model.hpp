#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "mmdemand/grid.hpp"

namespace mmdemand {

/// CDF of the half-normal distribution with scale `sigma`, evaluated via erf.
double half_normal_cdf(double x, double sigma);

/// Discretized distribution of the distance a user is willing to travel.
///
/// Bin l covers thresholds in [boundaries[l], boundaries[l+1]); a user in bin
/// l considers vehicles up to classes()[l] away. Any choice model reduces to
/// this table of bin masses, so alternative models plug in through
/// from_class_probs().
class ThresholdDistribution {
public:
    ThresholdDistribution() = default;

    /// Half-normal masses truncated at dist_max and renormalized so they sum to one.
    static ThresholdDistribution half_normal(double sigma, const DistanceClassTable& classes);

    /// Arbitrary bin masses over the table's classes. Masses must be
    /// non-negative and are renormalized.
    static ThresholdDistribution from_class_probs(std::vector<double> probs,
                                                  const DistanceClassTable& classes);

    /// Users never leave their own cell (the p0 -> 1 limit).
    static ThresholdDistribution own_cell_only(const DistanceClassTable& classes);

    double sigma() const noexcept { return sigma_; }
    double dist_max() const noexcept { return dist_max_; }
    std::size_t class_count() const noexcept { return class_probs_.size(); }
    const std::vector<double>& boundaries() const noexcept { return boundaries_; }
    const std::vector<double>& class_probs() const noexcept { return class_probs_; }
    const std::vector<double>& survival() const noexcept { return survival_; }

    /// Pr(threshold >= classes[l]); zero past the last class.
    double survival_at(std::size_t l) const noexcept {
        return l < survival_.size() ? survival_[l] : 0.0;
    }

    /// True when built for the same class boundaries as `classes`.
    bool matches(const DistanceClassTable& classes) const noexcept;

    /// Draws a threshold bin with probability class_probs()[l].
    template <class Rng>
    std::size_t sample(Rng& rng) const {
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        double u = u01(rng);
        for (std::size_t l = 0; l + 1 < class_probs_.size(); ++l) {
            if (u < class_probs_[l]) return l;
            u -= class_probs_[l];
        }
        return class_probs_.size() - 1;
    }

private:
    void finish();

    double sigma_ = 0.0;
    double dist_max_ = 0.0;
    std::vector<double> boundaries_;
    std::vector<double> class_probs_;
    std::vector<double> survival_;
};

inline ThresholdDistribution threshold_probs(double sigma, const DistanceClassTable& classes) {
    return ThresholdDistribution::half_normal(sigma, classes);
}

template <class Rng>
std::size_t sample_threshold(const ThresholdDistribution& dist, Rng& rng) {
    return dist.sample(rng);
}

struct SigmaSearch {
    static constexpr double kLow = 1e-2;
    static constexpr double kHigh = 1e7;
    static constexpr int kMaxIterations = 200;
};

/// Bisection for the half-normal scale whose first-bin mass equals `p0`
/// within `tol`. Throws InfeasibleParameterError when p0 lies outside the
/// range achievable for this class table.
double solve_sigma(double p0, const DistanceClassTable& classes, double tol = 1e-4);

/// Threshold distribution for an interpretable p0 in (0, 1]. p0 = 1 yields
/// own_cell_only(); a single-class table yields the trivial one-bin model.
ThresholdDistribution make_threshold_distribution(double p0, const DistanceClassTable& classes,
                                                  double tol = 1e-4);

} // namespace mmdemand

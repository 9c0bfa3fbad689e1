#include "mmdemand/choice_model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mmdemand/error.hpp"

namespace mmdemand {

double half_normal_cdf(double x, double sigma) {
    if (x <= 0.0) return 0.0;
    return std::erf(x / (sigma * std::numbers::sqrt2));
}

ThresholdDistribution ThresholdDistribution::half_normal(double sigma,
                                                         const DistanceClassTable& classes) {
    if (!(sigma > 0.0)) throw std::invalid_argument("threshold_probs: sigma must be positive");
    if (classes.class_count() == 0) throw std::invalid_argument("threshold_probs: empty class table");

    ThresholdDistribution d;
    d.sigma_ = sigma;
    d.dist_max_ = classes.dist_max();
    d.boundaries_ = classes.boundaries();
    const std::size_t n = classes.class_count();
    d.class_probs_.assign(n, 0.0);
    if (n == 1) {
        d.class_probs_[0] = 1.0;
    } else {
        const double norm = half_normal_cdf(d.boundaries_.back(), sigma);
        for (std::size_t l = 0; l < n; ++l) {
            d.class_probs_[l] =
                (half_normal_cdf(d.boundaries_[l + 1], sigma) - half_normal_cdf(d.boundaries_[l], sigma)) /
                norm;
        }
    }
    d.finish();
    return d;
}

ThresholdDistribution ThresholdDistribution::from_class_probs(std::vector<double> probs,
                                                              const DistanceClassTable& classes) {
    if (probs.size() != classes.class_count()) {
        throw std::invalid_argument("from_class_probs: one mass per distance class required");
    }
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("from_class_probs: negative mass");
        total += p;
    }
    if (!(total > 0.0)) throw std::invalid_argument("from_class_probs: masses sum to zero");
    ThresholdDistribution d;
    d.dist_max_ = classes.dist_max();
    d.boundaries_ = classes.boundaries();
    for (double& p : probs) p /= total;
    d.class_probs_ = std::move(probs);
    d.finish();
    return d;
}

ThresholdDistribution ThresholdDistribution::own_cell_only(const DistanceClassTable& classes) {
    std::vector<double> probs(classes.class_count(), 0.0);
    probs.at(0) = 1.0;
    return from_class_probs(std::move(probs), classes);
}

void ThresholdDistribution::finish() {
    const std::size_t n = class_probs_.size();
    double total = 0.0;
    for (double p : class_probs_) total += p;
    for (double& p : class_probs_) p /= total;

    survival_.assign(n, 0.0);
    double acc = 0.0;
    for (std::size_t l = n; l-- > 0;) {
        acc += class_probs_[l];
        survival_[l] = acc;
    }
    survival_[0] = 1.0;
    // masses are re-derived from survival so adjacent differences are exact
    for (std::size_t l = 0; l + 1 < n; ++l) class_probs_[l] = survival_[l] - survival_[l + 1];
    class_probs_[n - 1] = survival_[n - 1];
}

bool ThresholdDistribution::matches(const DistanceClassTable& classes) const noexcept {
    const auto& b = classes.boundaries();
    if (b.size() != boundaries_.size()) return false;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (std::abs(b[i] - boundaries_[i]) > DistanceClassTable::kMergeTolerance) return false;
    }
    return true;
}

namespace {

double first_bin_mass(double sigma, const DistanceClassTable& classes) {
    const auto& b = classes.boundaries();
    return half_normal_cdf(b[1], sigma) / half_normal_cdf(b.back(), sigma);
}

} // namespace

double solve_sigma(double p0, const DistanceClassTable& classes, double tol) {
    if (!(p0 > 0.0 && p0 < 1.0)) {
        throw InfeasibleParameterError("p0 must lie strictly between 0 and 1", 0.0, 1.0);
    }
    if (!(tol > 0.0)) throw std::invalid_argument("solve_sigma: tolerance must be positive");
    if (classes.class_count() < 2) {
        throw InfeasibleParameterError("a single distance class always has first-bin mass 1", 1.0, 1.0);
    }

    double lo = SigmaSearch::kLow;   // first-bin mass near 1
    double hi = SigmaSearch::kHigh;  // first-bin mass near the flat limit
    const double mass_lo = first_bin_mass(lo, classes);
    const double mass_hi = first_bin_mass(hi, classes);
    if (!(p0 > mass_hi && p0 < mass_lo)) {
        std::ostringstream msg;
        msg << "p0 = " << p0 << " is not achievable; first-bin mass ranges over (" << mass_hi << ", "
            << mass_lo << ")";
        throw InfeasibleParameterError(msg.str(), mass_hi, mass_lo);
    }

    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < SigmaSearch::kMaxIterations; ++it) {
        mid = 0.5 * (lo + hi);
        const double mass = first_bin_mass(mid, classes);
        if (std::abs(mass - p0) <= tol) return mid;
        if (mass > p0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return mid;
}

ThresholdDistribution make_threshold_distribution(double p0, const DistanceClassTable& classes,
                                                  double tol) {
    if (p0 == 1.0) return ThresholdDistribution::own_cell_only(classes);
    if (!(p0 > 0.0 && p0 < 1.0)) {
        throw InfeasibleParameterError("p0 must lie in (0, 1]", 0.0, 1.0);
    }
    if (classes.class_count() == 1) return ThresholdDistribution::own_cell_only(classes);
    return ThresholdDistribution::half_normal(solve_sigma(p0, classes, tol), classes);
}

} // namespace mmdemand

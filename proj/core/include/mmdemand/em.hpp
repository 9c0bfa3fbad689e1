#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmdemand/choice_model.hpp"
#include "mmdemand/grid.hpp"
#include "mmdemand/time.hpp"
#include "mmdemand/timeline.hpp"

namespace mmdemand {

/// An observed trip start: time, service period and pickup cell.
struct TripEvent {
    Seconds time = 0;
    std::int32_t period = 0;
    CellIndex cell;
};

struct PiEntry {
    CellIndex cell;
    double value = 0.0;
};

/// Nonzero pi[x][i] for one trip, ordered by cell.
using PiVector = std::vector<PiEntry>;

/// Probability that a user arriving in each nearby cell at the trip's time
/// would have picked a vehicle in the trip's pickup cell. `counts` is the
/// vehicle snapshot at the trip time. Throws DataIntegrityError when the
/// pickup cell is empty.
PiVector pi_vector(const TripEvent& trip, std::span<const std::int32_t> counts, const GridSpec& grid,
                   const DistanceClassTable& classes, const ThresholdDistribution& dist);

/// Compressed rows of per-trip values aligned with a trip list; shared by
/// pi vectors and membership weights.
class SparseTripTable {
public:
    SparseTripTable() : offsets_{0} {}

    std::size_t trip_count() const noexcept { return offsets_.size() - 1; }
    std::size_t nonzeros() const noexcept { return cells_.size(); }

    std::span<const CellIndex> cells(std::size_t x) const noexcept {
        return {cells_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
    }
    std::span<const double> values(std::size_t x) const noexcept {
        return {values_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
    }
    std::span<double> values(std::size_t x) noexcept {
        return {values_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
    }

    void append(std::span<const PiEntry> row);
    /// Same sparsity as `other`, all values zero.
    static SparseTripTable zeros_like(const SparseTripTable& other);

private:
    std::vector<std::size_t> offsets_;
    std::vector<CellIndex> cells_;
    std::vector<double> values_;
};

using PiTable = SparseTripTable;
using MembershipWeights = SparseTripTable;

/// pi vectors for every trip, in input order, from a single sweep over the
/// timeline.
PiTable compute_pi_table(std::span<const TripEvent> trips, const AvailabilityTimeline& timeline,
                         const DistanceClassTable& classes, const ThresholdDistribution& dist);

/// mu[h][i] with a mask of estimable entries. Masked entries hold no rate.
class RateMatrix {
public:
    RateMatrix() = default;
    RateMatrix(std::int32_t periods, std::int32_t cells)
        : periods_(periods),
          cells_(cells),
          values_(static_cast<std::size_t>(periods) * cells, 0.0),
          estimable_(static_cast<std::size_t>(periods) * cells, 0) {}

    std::int32_t period_count() const noexcept { return periods_; }
    std::int32_t cell_count() const noexcept { return cells_; }

    double rate(std::int32_t h, CellIndex i) const noexcept { return values_[index(h, i)]; }
    bool estimable(std::int32_t h, CellIndex i) const noexcept { return estimable_[index(h, i)] != 0; }

    void set(std::int32_t h, CellIndex i, double v) noexcept { values_[index(h, i)] = v; }
    void set_estimable(std::int32_t h, CellIndex i, bool e) noexcept { estimable_[index(h, i)] = e ? 1 : 0; }

    std::size_t estimable_count() const noexcept;
    /// Largest |a - b| over entries estimable in both.
    static double max_abs_difference(const RateMatrix& a, const RateMatrix& b) noexcept;

private:
    std::size_t index(std::int32_t h, CellIndex i) const noexcept {
        return static_cast<std::size_t>(h) * cells_ + static_cast<std::size_t>(i.value);
    }

    std::int32_t periods_ = 0;
    std::int32_t cells_ = 0;
    std::vector<double> values_;
    std::vector<std::uint8_t> estimable_;
};

enum class InitMode { uniform, trips, gamma_blend };

struct EMConfig {
    InitMode init_mode = InitMode::uniform;
    /// Weight of the uniform start in gamma_blend: gamma * uniform + (1 - gamma) * trips.
    double gamma = 1.0;
    double tol = 1e-6;
    std::int32_t max_iters = 1000;
    double alpha_floor = 1e-2;
    std::int32_t threads = 1;

    void validate() const;
};

struct EStepStats {
    /// Trips whose current rates were all zero; weighted by pi alone.
    std::size_t fallback_trips = 0;
    /// Trips without any estimable cell in their pi support.
    std::size_t unassignable_trips = 0;
};

/// Membership weights w[x][i] proportional to pi[x][i] * mu[h][i] over estimable cells.
MembershipWeights e_step(std::span<const TripEvent> trips, const PiTable& pi, const RateMatrix& mu,
                         EStepStats* stats = nullptr);

/// Estimable mask: alpha >= floor.
RateMatrix estimable_mask(const AlphaMatrix& alpha, double alpha_floor);

/// mu[h][i] = (1/k) sum_{x in h} w[x][i] / alpha[h][i] over estimable cells.
RateMatrix m_step(std::span<const TripEvent> trips, const MembershipWeights& weights, const AlphaMatrix& alpha,
                  std::int32_t days, const EMConfig& cfg);

/// Censored-Poisson observed-data log-likelihood (up to a constant) over
/// estimable cells. Trips without estimable support are skipped; a trip
/// whose pi-weighted rate is zero makes the result -infinity.
double log_likelihood(std::span<const TripEvent> trips, const PiTable& pi, const RateMatrix& mu,
                      const AlphaMatrix& alpha, std::int32_t days);

/// Observed trips per day for every (period, cell).
RateMatrix observed_trip_rate(std::span<const TripEvent> trips, std::int32_t periods, std::int32_t cells,
                              std::int32_t days);

/// Starting rates for the configured init mode, masked like `mask`.
RateMatrix initial_rates(std::span<const TripEvent> trips, const RateMatrix& mask, std::int32_t days,
                         const EMConfig& cfg);

struct EMDiagnostics {
    std::int32_t iterations = 0;
    bool converged = false;
    /// Log-likelihood at the starting rates followed by one entry per iteration.
    std::vector<double> log_likelihood_trace;
    std::size_t fallback_trips = 0;
    std::size_t unassignable_trips = 0;
    std::vector<std::string> warnings;
};

struct EMResult {
    RateMatrix rates;
    EMDiagnostics diagnostics;
};

/// Called after every M-step with the iteration number (1-based), the new
/// rates and their log-likelihood.
using EMObserver = std::function<void(std::int32_t, const RateMatrix&, double)>;

/// EM from precomputed pi vectors and alpha.
EMResult run_em(std::span<const TripEvent> trips, const PiTable& pi, const AlphaMatrix& alpha, std::int32_t days,
                const EMConfig& cfg, const EMObserver& observer = {});

/// Naive estimator: observed rate divided by the fraction of time the cell
/// itself holds a vehicle. Cells stocked less than alpha_floor are masked.
RateMatrix naive_estimate(std::span<const TripEvent> trips, const NearestBikeProfile& profile, std::int32_t days,
                          double alpha_floor = 1e-2);

/// Same, deriving the in-cell stocking fraction from the timeline.
RateMatrix naive_estimate(std::span<const TripEvent> trips, const AvailabilityTimeline& timeline,
                          double alpha_floor = 1e-2);

inline constexpr double kNegativeInfinity = -std::numeric_limits<double>::infinity();

} // namespace mmdemand

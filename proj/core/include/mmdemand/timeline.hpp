#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mmdemand/choice_model.hpp"
#include "mmdemand/grid.hpp"
#include "mmdemand/time.hpp"

namespace mmdemand {

enum class EventSource : std::uint8_t { trip_start, trip_end, rebalance_add, rebalance_remove };

std::string_view to_string(EventSource s) noexcept;

/// A change of `delta` vehicles in one cell. Sources follow the sign:
/// trip_start and rebalance_remove remove vehicles, the others add them.
struct AvailabilityEvent {
    Seconds time = 0;
    CellIndex cell;
    std::int32_t delta = 0;
    EventSource source = EventSource::rebalance_add;
};

/// Replay order: time, then cell, then additions before removals.
bool replay_before(const AvailabilityEvent& a, const AvailabilityEvent& b) noexcept;

/// Piecewise-constant per-cell vehicle counts over k consecutive service days.
///
/// The horizon is [horizon_start, horizon_start + days * 86400]; counts are
/// zero at horizon_start and change only at events. Immutable once built.
class AvailabilityTimeline {
public:
    AvailabilityTimeline() = default;

    /// Sorts and validates the events. Throws DataIntegrityError naming the
    /// first event that drives a count negative, std::invalid_argument for
    /// events outside the horizon or cells outside the grid.
    AvailabilityTimeline(std::vector<AvailabilityEvent> events, const GridSpec& grid, Seconds horizon_start,
                         std::int32_t days, PeriodScheme periods);

    const GridSpec& grid() const noexcept { return grid_; }
    std::int32_t days() const noexcept { return days_; }
    const PeriodScheme& periods() const noexcept { return periods_; }
    Seconds horizon_start() const noexcept { return horizon_start_; }
    Seconds horizon_end() const noexcept { return horizon_start_ + days_ * kSecondsPerDay; }
    std::span<const AvailabilityEvent> events() const noexcept { return events_; }

    /// Vehicles in `cell` just before the removals at time t: every event
    /// strictly earlier plus additions at exactly t. A trip starting at t
    /// therefore still sees its own vehicle.
    std::int32_t count_at(CellIndex cell, Seconds t) const;

    /// count_at() for every cell. Throws std::out_of_range outside the horizon.
    std::vector<std::int32_t> snapshot(Seconds t) const;

private:
    GridSpec grid_;
    Seconds horizon_start_ = 0;
    std::int32_t days_ = 0;
    PeriodScheme periods_;
    std::vector<AvailabilityEvent> events_;

    // per-cell event index for O(log n) point queries
    std::vector<std::size_t> cell_begin_;
    std::vector<Seconds> cell_time_;
    std::vector<std::uint8_t> cell_is_removal_;
    std::vector<std::int32_t> cell_count_after_;
};

inline AvailabilityTimeline build_timeline(std::vector<AvailabilityEvent> events, const GridSpec& grid,
                                           Seconds horizon_start, std::int32_t days, PeriodScheme periods) {
    return AvailabilityTimeline(std::move(events), grid, horizon_start, days, periods);
}

/// perc[h][i][l]: fraction of period-h time, averaged over all days, during
/// which the nearest available vehicle to cell i is at most classes[l] away.
class NearestBikeProfile {
public:
    NearestBikeProfile() = default;
    NearestBikeProfile(std::int32_t periods, std::int32_t cells, std::vector<double> boundaries);

    std::int32_t period_count() const noexcept { return periods_; }
    std::int32_t cell_count() const noexcept { return cells_; }
    std::size_t class_count() const noexcept { return boundaries_.size() - 1; }
    const std::vector<double>& boundaries() const noexcept { return boundaries_; }

    double perc(std::int32_t h, CellIndex i, std::size_t l) const noexcept {
        return values_[index(h, i, l)];
    }
    double& perc(std::int32_t h, CellIndex i, std::size_t l) noexcept { return values_[index(h, i, l)]; }

    std::span<const double> row(std::int32_t h, CellIndex i) const noexcept {
        return {values_.data() + index(h, i, 0), class_count()};
    }

    /// Fraction of period-h time with at least one vehicle in cell i itself.
    double in_cell_fraction(std::int32_t h, CellIndex i) const noexcept { return perc(h, i, 0); }

private:
    std::size_t index(std::int32_t h, CellIndex i, std::size_t l) const noexcept {
        return (static_cast<std::size_t>(h) * cells_ + static_cast<std::size_t>(i.value)) * class_count() + l;
    }

    std::int32_t periods_ = 0;
    std::int32_t cells_ = 0;
    std::vector<double> boundaries_{0.0, 0.0};
    std::vector<double> values_;
};

/// Exact time integration of the nearest-vehicle class for every cell.
NearestBikeProfile nearest_profile(const AvailabilityTimeline& timeline, const DistanceClassTable& classes);

/// alpha[h][i]: probability that a user arriving uniformly in period h at
/// cell i finds a vehicle within their threshold.
class AlphaMatrix {
public:
    AlphaMatrix() = default;
    AlphaMatrix(std::int32_t periods, std::int32_t cells)
        : periods_(periods), cells_(cells), values_(static_cast<std::size_t>(periods) * cells, 0.0) {}

    std::int32_t period_count() const noexcept { return periods_; }
    std::int32_t cell_count() const noexcept { return cells_; }
    double at(std::int32_t h, CellIndex i) const noexcept { return values_[index(h, i)]; }
    double& at(std::int32_t h, CellIndex i) noexcept { return values_[index(h, i)]; }

private:
    std::size_t index(std::int32_t h, CellIndex i) const noexcept {
        return static_cast<std::size_t>(h) * cells_ + static_cast<std::size_t>(i.value);
    }

    std::int32_t periods_ = 0;
    std::int32_t cells_ = 0;
    std::vector<double> values_;
};

/// alpha = sum_l perc[h][i][l] * class_probs[l]. Throws std::invalid_argument
/// when the profile and the distribution use different class boundaries.
AlphaMatrix compute_alpha(const NearestBikeProfile& profile, const ThresholdDistribution& dist);

} // namespace mmdemand

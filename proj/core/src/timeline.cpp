#include "mmdemand/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mmdemand/error.hpp"
#include "nearest_tracker.hpp"

namespace mmdemand {

std::string_view to_string(EventSource s) noexcept {
    switch (s) {
        case EventSource::trip_start: return "trip-start";
        case EventSource::trip_end: return "trip-end";
        case EventSource::rebalance_add: return "rebalance-add";
        case EventSource::rebalance_remove: return "rebalance-remove";
    }
    return "unknown";
}

bool replay_before(const AvailabilityEvent& a, const AvailabilityEvent& b) noexcept {
    if (a.time != b.time) return a.time < b.time;
    if (a.cell != b.cell) return a.cell < b.cell;
    const bool a_add = a.delta > 0;
    const bool b_add = b.delta > 0;
    return a_add && !b_add;
}

AvailabilityTimeline::AvailabilityTimeline(std::vector<AvailabilityEvent> events, const GridSpec& grid,
                                           Seconds horizon_start, std::int32_t days, PeriodScheme periods)
    : grid_(grid), horizon_start_(horizon_start), days_(days), periods_(periods), events_(std::move(events)) {
    if (days_ < 1) throw std::invalid_argument("build_timeline: days must be >= 1");
    periods_.validate();
    std::stable_sort(events_.begin(), events_.end(), replay_before);

    const auto m = static_cast<std::size_t>(grid_.cell_count());
    std::vector<std::int32_t> running(m, 0);
    std::vector<std::size_t> per_cell(m + 1, 0);
    for (const AvailabilityEvent& e : events_) {
        if (e.cell.value < 0 || static_cast<std::size_t>(e.cell.value) >= m) {
            throw std::invalid_argument("build_timeline: event cell outside the grid");
        }
        if (e.time < horizon_start_ || e.time > horizon_end()) {
            throw std::invalid_argument("build_timeline: event at " + format_timestamp(e.time) +
                                        " outside the horizon");
        }
        std::int32_t& c = running[static_cast<std::size_t>(e.cell.value)];
        c += e.delta;
        if (c < 0) {
            std::ostringstream msg;
            msg << "vehicle count in cell " << e.cell.value << " goes negative at " << format_timestamp(e.time)
                << " (" << to_string(e.source) << ", delta " << e.delta << ")";
            throw DataIntegrityError(msg.str());
        }
        ++per_cell[static_cast<std::size_t>(e.cell.value) + 1];
    }

    for (std::size_t c = 0; c < m; ++c) per_cell[c + 1] += per_cell[c];
    cell_begin_ = per_cell;
    cell_time_.resize(events_.size());
    cell_is_removal_.resize(events_.size());
    cell_count_after_.resize(events_.size());
    std::vector<std::size_t> fill(per_cell.begin(), per_cell.end() - 1);
    std::fill(running.begin(), running.end(), 0);
    for (const AvailabilityEvent& e : events_) {
        const auto c = static_cast<std::size_t>(e.cell.value);
        const std::size_t k = fill[c]++;
        running[c] += e.delta;
        cell_time_[k] = e.time;
        cell_is_removal_[k] = e.delta < 0 ? 1 : 0;
        cell_count_after_[k] = running[c];
    }
}

std::int32_t AvailabilityTimeline::count_at(CellIndex cell, Seconds t) const {
    if (t < horizon_start_ || t > horizon_end()) throw std::out_of_range("snapshot outside the horizon");
    const auto c = static_cast<std::size_t>(cell.value);
    const std::size_t lo = cell_begin_[c];
    const std::size_t hi = cell_begin_[c + 1];
    // events at (time < t) or (time == t and addition)
    std::size_t a = lo, b = hi;
    while (a < b) {
        const std::size_t mid = a + (b - a) / 2;
        const bool before = cell_time_[mid] < t || (cell_time_[mid] == t && !cell_is_removal_[mid]);
        if (before) {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    return a == lo ? 0 : cell_count_after_[a - 1];
}

std::vector<std::int32_t> AvailabilityTimeline::snapshot(Seconds t) const {
    std::vector<std::int32_t> out(static_cast<std::size_t>(grid_.cell_count()));
    for (std::int32_t c = 0; c < grid_.cell_count(); ++c) out[static_cast<std::size_t>(c)] = count_at({c}, t);
    return out;
}

NearestBikeProfile::NearestBikeProfile(std::int32_t periods, std::int32_t cells, std::vector<double> boundaries)
    : periods_(periods), cells_(cells), boundaries_(std::move(boundaries)) {
    values_.assign(static_cast<std::size_t>(periods_) * cells_ * class_count(), 0.0);
}

namespace {

/// Seconds each (period, cell, nearest class) state has been held.
class HoldingTime {
public:
    HoldingTime(const PeriodScheme& periods, Seconds horizon_start, std::int32_t cells, std::size_t classes)
        : periods_(periods),
          start_(horizon_start),
          cells_(cells),
          classes_(classes),
          seconds_(static_cast<std::size_t>(periods.count) * cells * classes, 0) {}

    void add(CellIndex i, std::uint32_t l, Seconds t0, Seconds t1) {
        if (l >= classes_ || t1 <= t0) return;
        const Seconds r0 = t0 - start_;
        const Seconds r1 = t1 - start_;
        const Seconds d0 = r0 / kSecondsPerDay;
        const Seconds d1 = (r1 - 1) / kSecondsPerDay;
        if (d0 == d1) {
            add_within_day(i, l, r0 - d0 * kSecondsPerDay, r1 - d0 * kSecondsPerDay, 1);
            return;
        }
        add_within_day(i, l, r0 - d0 * kSecondsPerDay, kSecondsPerDay, 1);
        if (d1 - d0 > 1) add_within_day(i, l, 0, kSecondsPerDay, d1 - d0 - 1);
        add_within_day(i, l, 0, r1 - d1 * kSecondsPerDay, 1);
    }

    std::int64_t at(std::int32_t h, std::int32_t i, std::size_t l) const {
        return seconds_[(static_cast<std::size_t>(h) * cells_ + static_cast<std::size_t>(i)) * classes_ + l];
    }

private:
    void add_within_day(CellIndex i, std::uint32_t l, Seconds s, Seconds e, Seconds repeat) {
        const Seconds lo = std::max(s, periods_.window_start);
        const Seconds hi = std::min(e, periods_.window_end);
        if (hi <= lo) return;
        const Seconds len = periods_.length();
        for (auto h = static_cast<std::int32_t>((lo - periods_.window_start) / len); h < periods_.count; ++h) {
            const Seconds ps = periods_.period_start(h);
            if (ps >= hi) break;
            const Seconds overlap = std::min(hi, ps + len) - std::max(lo, ps);
            if (overlap > 0) {
                seconds_[(static_cast<std::size_t>(h) * cells_ + static_cast<std::size_t>(i.value)) * classes_ + l] +=
                    overlap * repeat;
            }
        }
    }

    PeriodScheme periods_;
    Seconds start_;
    std::int32_t cells_;
    std::size_t classes_;
    std::vector<std::int64_t> seconds_;
};

} // namespace

NearestBikeProfile nearest_profile(const AvailabilityTimeline& timeline, const DistanceClassTable& classes) {
    const GridSpec& grid = timeline.grid();
    const std::int32_t m = grid.cell_count();
    const std::size_t L = classes.class_count();
    const PeriodScheme& periods = timeline.periods();

    HoldingTime held(periods, timeline.horizon_start(), m, L);
    detail::NearestTracker tracker(grid, classes);
    std::vector<Seconds> since(static_cast<std::size_t>(m), timeline.horizon_start());

    for (const AvailabilityEvent& e : timeline.events()) {
        tracker.apply(e.cell, e.delta, [&](CellIndex c, std::uint32_t old_class, std::uint32_t) {
            Seconds& s = since[static_cast<std::size_t>(c.value)];
            held.add(c, old_class, s, e.time);
            s = e.time;
        });
    }
    for (std::int32_t c = 0; c < m; ++c) {
        held.add({c}, tracker.nearest({c}), since[static_cast<std::size_t>(c)], timeline.horizon_end());
    }

    NearestBikeProfile profile(periods.count, m, classes.boundaries());
    const double denom = static_cast<double>(timeline.days()) * static_cast<double>(periods.length());
    for (std::int32_t h = 0; h < periods.count; ++h) {
        for (std::int32_t i = 0; i < m; ++i) {
            std::int64_t cumulative = 0;
            for (std::size_t l = 0; l < L; ++l) {
                cumulative += held.at(h, i, l);
                profile.perc(h, {i}, l) = static_cast<double>(cumulative) / denom;
            }
        }
    }
    return profile;
}

AlphaMatrix compute_alpha(const NearestBikeProfile& profile, const ThresholdDistribution& dist) {
    if (dist.boundaries().size() != profile.boundaries().size()) {
        throw std::invalid_argument("compute_alpha: class-table mismatch between profile and distribution");
    }
    for (std::size_t l = 0; l < dist.boundaries().size(); ++l) {
        if (std::abs(dist.boundaries()[l] - profile.boundaries()[l]) > DistanceClassTable::kMergeTolerance) {
            throw std::invalid_argument("compute_alpha: class-table mismatch between profile and distribution");
        }
    }
    AlphaMatrix alpha(profile.period_count(), profile.cell_count());
    const auto& probs = dist.class_probs();
    for (std::int32_t h = 0; h < profile.period_count(); ++h) {
        for (std::int32_t i = 0; i < profile.cell_count(); ++i) {
            double a = 0.0;
            const auto row = profile.row(h, {i});
            for (std::size_t l = 0; l < probs.size(); ++l) a += row[l] * probs[l];
            alpha.at(h, {i}) = std::min(1.0, a);
        }
    }
    return alpha;
}

} // namespace mmdemand

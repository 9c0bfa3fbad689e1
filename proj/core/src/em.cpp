#include "mmdemand/em.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mmdemand/error.hpp"
#include "nearest_tracker.hpp"

namespace mmdemand {
namespace {

[[noreturn]] void empty_pickup(const TripEvent& trip) {
    std::ostringstream msg;
    msg << "trip at " << format_timestamp(trip.time) << " departs cell " << trip.cell.value
        << " which holds no vehicle";
    throw DataIntegrityError(msg.str());
}

// pi for every cell i within dist_max of the pickup cell j: the pickup cell
// must lie in i's nearest nonempty class c, then
// pi = Pr(threshold >= dist_c) * |vehicles in j| / |vehicles in class c around i|.
template <class CountFn, class NearestFn>
void fill_pi(const TripEvent& trip, CountFn&& count, NearestFn&& nearest, const GridSpec& grid,
             const DistanceClassTable& classes, const ThresholdDistribution& dist, PiVector& out) {
    out.clear();
    const std::int32_t at_pickup = count(trip.cell);
    if (at_pickup <= 0) empty_pickup(trip);
    classes.for_each_within(grid, trip.cell, [&](CellIndex i, std::size_t c) {
        if (nearest(i) != c) return;
        const double surv = dist.survival_at(c);
        if (surv <= 0.0) return;
        std::int64_t nearest_total = 0;
        classes.for_each_neighbor(grid, i, c, [&](CellIndex n) { nearest_total += count(n); });
        out.push_back({i, surv * static_cast<double>(at_pickup) / static_cast<double>(nearest_total)});
    });
    std::sort(out.begin(), out.end(), [](const PiEntry& a, const PiEntry& b) { return a.cell < b.cell; });
}

std::vector<std::vector<std::size_t>> trips_by_period(std::span<const TripEvent> trips, std::int32_t periods) {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(periods));
    for (std::size_t x = 0; x < trips.size(); ++x) {
        const std::int32_t h = trips[x].period;
        if (h < 0 || h >= periods) throw std::invalid_argument("trip period outside the period scheme");
        out[static_cast<std::size_t>(h)].push_back(x);
    }
    return out;
}

void e_step_trips(std::span<const TripEvent> trips, const PiTable& pi, const RateMatrix& mu,
                  std::span<const std::size_t> indices, MembershipWeights& weights, EStepStats& stats) {
    for (const std::size_t x : indices) {
        const std::int32_t h = trips[x].period;
        const auto cells = pi.cells(x);
        const auto p = pi.values(x);
        auto w = weights.values(x);
        double denom = 0.0;
        double support = 0.0;
        for (std::size_t k = 0; k < cells.size(); ++k) {
            w[k] = 0.0;
            if (!mu.estimable(h, cells[k])) continue;
            denom += p[k] * mu.rate(h, cells[k]);
            support += p[k];
        }
        if (denom > 0.0) {
            for (std::size_t k = 0; k < cells.size(); ++k) {
                if (mu.estimable(h, cells[k])) w[k] = p[k] * mu.rate(h, cells[k]) / denom;
            }
        } else if (support > 0.0) {
            ++stats.fallback_trips;
            for (std::size_t k = 0; k < cells.size(); ++k) {
                if (mu.estimable(h, cells[k])) w[k] = p[k] / support;
            }
        } else {
            ++stats.unassignable_trips;
        }
    }
}

void m_step_period(std::int32_t h, std::span<const std::size_t> indices, const MembershipWeights& weights,
                   const AlphaMatrix& alpha, std::int32_t days, std::span<double> scratch, RateMatrix& out) {
    std::fill(scratch.begin(), scratch.end(), 0.0);
    for (const std::size_t x : indices) {
        const auto cells = weights.cells(x);
        const auto w = weights.values(x);
        for (std::size_t k = 0; k < cells.size(); ++k) scratch[static_cast<std::size_t>(cells[k].value)] += w[k];
    }
    for (std::int32_t i = 0; i < out.cell_count(); ++i) {
        if (!out.estimable(h, {i})) {
            out.set(h, {i}, 0.0);
            continue;
        }
        out.set(h, {i}, scratch[static_cast<std::size_t>(i)] / (static_cast<double>(days) * alpha.at(h, {i})));
    }
}

/// Runs `body(h)` for every period on up to `threads` workers; each worker
/// owns a fixed stride of periods so results do not depend on scheduling.
template <class F>
void for_each_period(std::int32_t periods, std::int32_t threads, F&& body) {
    const std::int32_t workers = std::max(1, std::min(threads, periods));
    if (workers == 1) {
        for (std::int32_t h = 0; h < periods; ++h) body(h, 0);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::int32_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::int32_t h = w; h < periods; h += workers) body(h, w);
        });
    }
}

} // namespace

PiVector pi_vector(const TripEvent& trip, std::span<const std::int32_t> counts, const GridSpec& grid,
                   const DistanceClassTable& classes, const ThresholdDistribution& dist) {
    if (counts.size() != static_cast<std::size_t>(grid.cell_count())) {
        throw std::invalid_argument("pi_vector: snapshot size does not match the grid");
    }
    const auto count = [&](CellIndex c) { return counts[static_cast<std::size_t>(c.value)]; };
    const auto nearest = [&](CellIndex i) -> std::size_t {
        for (std::size_t l = 0; l < classes.class_count(); ++l) {
            bool found = false;
            classes.for_each_neighbor(grid, i, l, [&](CellIndex n) { found = found || count(n) > 0; });
            if (found) return l;
        }
        return classes.class_count();
    };
    PiVector out;
    fill_pi(trip, count, nearest, grid, classes, dist, out);
    return out;
}

void SparseTripTable::append(std::span<const PiEntry> row) {
    for (const PiEntry& e : row) {
        cells_.push_back(e.cell);
        values_.push_back(e.value);
    }
    offsets_.push_back(cells_.size());
}

SparseTripTable SparseTripTable::zeros_like(const SparseTripTable& other) {
    SparseTripTable t;
    t.offsets_ = other.offsets_;
    t.cells_ = other.cells_;
    t.values_.assign(other.values_.size(), 0.0);
    return t;
}

PiTable compute_pi_table(std::span<const TripEvent> trips, const AvailabilityTimeline& timeline,
                         const DistanceClassTable& classes, const ThresholdDistribution& dist) {
    if (!dist.matches(classes)) throw std::invalid_argument("compute_pi_table: class-table mismatch");
    const GridSpec& grid = timeline.grid();
    const auto events = timeline.events();

    // additions at time t are visible to trips at t, removals are not
    std::vector<std::size_t> event_order(events.size());
    std::iota(event_order.begin(), event_order.end(), std::size_t{0});
    std::stable_sort(event_order.begin(), event_order.end(), [&](std::size_t a, std::size_t b) {
        if (events[a].time != events[b].time) return events[a].time < events[b].time;
        return events[a].delta > 0 && events[b].delta <= 0;
    });
    std::vector<std::size_t> trip_order(trips.size());
    std::iota(trip_order.begin(), trip_order.end(), std::size_t{0});
    std::stable_sort(trip_order.begin(), trip_order.end(),
                     [&](std::size_t a, std::size_t b) { return trips[a].time < trips[b].time; });

    detail::NearestTracker tracker(grid, classes);
    const auto ignore = [](CellIndex, std::uint32_t, std::uint32_t) {};
    const auto count = [&](CellIndex c) { return tracker.count(c); };
    const auto nearest = [&](CellIndex c) { return static_cast<std::size_t>(tracker.nearest(c)); };

    std::vector<PiVector> rows(trips.size());
    std::size_t next_event = 0;
    for (const std::size_t x : trip_order) {
        const TripEvent& trip = trips[x];
        if (trip.cell.value < 0 || trip.cell.value >= grid.cell_count()) {
            throw std::invalid_argument("compute_pi_table: trip cell outside the grid");
        }
        while (next_event < event_order.size()) {
            const AvailabilityEvent& e = events[event_order[next_event]];
            if (e.time < trip.time || (e.time == trip.time && e.delta > 0)) {
                tracker.apply(e.cell, e.delta, ignore);
                ++next_event;
            } else {
                break;
            }
        }
        fill_pi(trip, count, nearest, grid, classes, dist, rows[x]);
    }

    PiTable table;
    for (const PiVector& row : rows) table.append(row);
    return table;
}

std::size_t RateMatrix::estimable_count() const noexcept {
    return static_cast<std::size_t>(std::count(estimable_.begin(), estimable_.end(), std::uint8_t{1}));
}

double RateMatrix::max_abs_difference(const RateMatrix& a, const RateMatrix& b) noexcept {
    double d = 0.0;
    for (std::size_t k = 0; k < a.values_.size() && k < b.values_.size(); ++k) {
        if (a.estimable_[k] && b.estimable_[k]) d = std::max(d, std::abs(a.values_[k] - b.values_[k]));
    }
    return d;
}

void EMConfig::validate() const {
    std::vector<FieldError> errors;
    if (!(tol > 0.0)) errors.push_back({"tol", "tolerance must be positive"});
    if (max_iters < 1) errors.push_back({"max_iters", "at least one iteration required"});
    if (!(gamma >= 0.0 && gamma <= 1.0)) errors.push_back({"gamma", "gamma must lie in [0, 1]"});
    if (!(alpha_floor >= 0.0 && alpha_floor < 1.0)) errors.push_back({"alpha_floor", "alpha floor must lie in [0, 1)"});
    if (threads < 1) errors.push_back({"threads", "at least one thread required"});
    if (!errors.empty()) throw ValidationError(std::move(errors));
}

MembershipWeights e_step(std::span<const TripEvent> trips, const PiTable& pi, const RateMatrix& mu,
                         EStepStats* stats) {
    if (pi.trip_count() != trips.size()) throw std::invalid_argument("e_step: pi table does not match trips");
    MembershipWeights w = MembershipWeights::zeros_like(pi);
    std::vector<std::size_t> all(trips.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    EStepStats local;
    e_step_trips(trips, pi, mu, all, w, local);
    if (stats != nullptr) *stats = local;
    return w;
}

RateMatrix estimable_mask(const AlphaMatrix& alpha, double alpha_floor) {
    RateMatrix mask(alpha.period_count(), alpha.cell_count());
    for (std::int32_t h = 0; h < alpha.period_count(); ++h) {
        for (std::int32_t i = 0; i < alpha.cell_count(); ++i) {
            const double a = alpha.at(h, {i});
            mask.set_estimable(h, {i}, a > 0.0 && a >= alpha_floor);
        }
    }
    return mask;
}

RateMatrix m_step(std::span<const TripEvent> trips, const MembershipWeights& weights, const AlphaMatrix& alpha,
                  std::int32_t days, const EMConfig& cfg) {
    if (days < 1) throw std::invalid_argument("m_step: days must be >= 1");
    RateMatrix out = estimable_mask(alpha, cfg.alpha_floor);
    const auto groups = trips_by_period(trips, alpha.period_count());
    std::vector<double> scratch(static_cast<std::size_t>(alpha.cell_count()));
    for (std::int32_t h = 0; h < alpha.period_count(); ++h) {
        m_step_period(h, groups[static_cast<std::size_t>(h)], weights, alpha, days, scratch, out);
    }
    return out;
}

double log_likelihood(std::span<const TripEvent> trips, const PiTable& pi, const RateMatrix& mu,
                      const AlphaMatrix& alpha, std::int32_t days) {
    double ll = 0.0;
    for (std::size_t x = 0; x < trips.size(); ++x) {
        const std::int32_t h = trips[x].period;
        const auto cells = pi.cells(x);
        const auto p = pi.values(x);
        double mass = 0.0;
        bool supported = false;
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (!mu.estimable(h, cells[k]) || p[k] <= 0.0) continue;
            supported = true;
            mass += p[k] * mu.rate(h, cells[k]);
        }
        if (!supported) continue;
        if (!(mass > 0.0)) return kNegativeInfinity;
        ll += std::log(mass);
    }
    double exposure = 0.0;
    for (std::int32_t h = 0; h < mu.period_count(); ++h) {
        for (std::int32_t i = 0; i < mu.cell_count(); ++i) {
            if (mu.estimable(h, {i})) exposure += alpha.at(h, {i}) * mu.rate(h, {i});
        }
    }
    return ll - static_cast<double>(days) * exposure;
}

RateMatrix observed_trip_rate(std::span<const TripEvent> trips, std::int32_t periods, std::int32_t cells,
                              std::int32_t days) {
    RateMatrix out(periods, cells);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(periods) * cells, 0);
    for (const TripEvent& t : trips) {
        if (t.period < 0 || t.period >= periods || t.cell.value < 0 || t.cell.value >= cells) {
            throw std::invalid_argument("observed_trip_rate: trip outside the period/grid ranges");
        }
        ++counts[static_cast<std::size_t>(t.period) * cells + static_cast<std::size_t>(t.cell.value)];
    }
    for (std::int32_t h = 0; h < periods; ++h) {
        for (std::int32_t i = 0; i < cells; ++i) {
            out.set(h, {i}, static_cast<double>(counts[static_cast<std::size_t>(h) * cells + i]) / days);
            out.set_estimable(h, {i}, true);
        }
    }
    return out;
}

RateMatrix initial_rates(std::span<const TripEvent> trips, const RateMatrix& mask, std::int32_t days,
                         const EMConfig& cfg) {
    const std::int32_t H = mask.period_count();
    const std::int32_t m = mask.cell_count();
    const RateMatrix observed = observed_trip_rate(trips, H, m, days);
    const double gamma = cfg.init_mode == InitMode::uniform ? 1.0
                         : cfg.init_mode == InitMode::trips ? 0.0
                                                            : cfg.gamma;
    RateMatrix out(H, m);
    for (std::int32_t h = 0; h < H; ++h) {
        double period_total = 0.0;
        std::int32_t estimable = 0;
        for (std::int32_t i = 0; i < m; ++i) {
            period_total += observed.rate(h, {i});
            if (mask.estimable(h, {i})) ++estimable;
        }
        const double uniform = estimable > 0 ? period_total / estimable : 0.0;
        for (std::int32_t i = 0; i < m; ++i) {
            const bool est = mask.estimable(h, {i});
            out.set_estimable(h, {i}, est);
            out.set(h, {i}, est ? gamma * uniform + (1.0 - gamma) * observed.rate(h, {i}) : 0.0);
        }
    }
    return out;
}

EMResult run_em(std::span<const TripEvent> trips, const PiTable& pi, const AlphaMatrix& alpha, std::int32_t days,
                const EMConfig& cfg, const EMObserver& observer) {
    cfg.validate();
    if (days < 1) throw std::invalid_argument("run_em: days must be >= 1");
    if (pi.trip_count() != trips.size()) throw std::invalid_argument("run_em: pi table does not match trips");

    const std::int32_t H = alpha.period_count();
    const auto groups = trips_by_period(trips, H);
    const RateMatrix mask = estimable_mask(alpha, cfg.alpha_floor);

    EMResult result;
    EMDiagnostics& diag = result.diagnostics;
    RateMatrix mu = initial_rates(trips, mask, days, cfg);
    diag.log_likelihood_trace.push_back(log_likelihood(trips, pi, mu, alpha, days));
    if (trips.empty()) diag.warnings.emplace_back("no trips: all estimable rates are zero");
    if (mask.estimable_count() == 0) diag.warnings.emplace_back("no cell reaches the alpha floor");

    const std::int32_t workers = std::max(1, std::min(cfg.threads, H));
    MembershipWeights weights = MembershipWeights::zeros_like(pi);
    std::vector<EStepStats> stats(static_cast<std::size_t>(workers));
    std::vector<std::vector<double>> scratch(static_cast<std::size_t>(workers),
                                             std::vector<double>(static_cast<std::size_t>(alpha.cell_count())));
    RateMatrix next = mask;

    for (std::int32_t it = 1; it <= cfg.max_iters; ++it) {
        std::fill(stats.begin(), stats.end(), EStepStats{});
        for_each_period(H, workers, [&](std::int32_t h, std::int32_t w) {
            const auto& idx = groups[static_cast<std::size_t>(h)];
            e_step_trips(trips, pi, mu, idx, weights, stats[static_cast<std::size_t>(w)]);
            m_step_period(h, idx, weights, alpha, days, scratch[static_cast<std::size_t>(w)], next);
        });
        if (it == 1) {
            for (const EStepStats& s : stats) {
                diag.fallback_trips += s.fallback_trips;
                diag.unassignable_trips += s.unassignable_trips;
            }
        }
        const double change = RateMatrix::max_abs_difference(mu, next);
        std::swap(mu, next);
        const double ll = log_likelihood(trips, pi, mu, alpha, days);
        diag.log_likelihood_trace.push_back(ll);
        diag.iterations = it;
        if (observer) observer(it, mu, ll);
        if (change <= cfg.tol) {
            diag.converged = true;
            break;
        }
    }
    if (diag.fallback_trips > 0) {
        diag.warnings.push_back(std::to_string(diag.fallback_trips) +
                                " trips had zero rate mass at the start and were weighted by pi alone");
    }
    if (diag.unassignable_trips > 0) {
        diag.warnings.push_back(std::to_string(diag.unassignable_trips) +
                                " trips have no estimable origin cell and were left out");
    }
    if (!diag.converged) diag.warnings.emplace_back("EM stopped at max_iters before reaching the tolerance");
    result.rates = std::move(mu);
    return result;
}

RateMatrix naive_estimate(std::span<const TripEvent> trips, const NearestBikeProfile& profile, std::int32_t days,
                          double alpha_floor) {
    const std::int32_t H = profile.period_count();
    const std::int32_t m = profile.cell_count();
    const RateMatrix observed = observed_trip_rate(trips, H, m, days);
    RateMatrix out(H, m);
    for (std::int32_t h = 0; h < H; ++h) {
        for (std::int32_t i = 0; i < m; ++i) {
            const double frac = profile.in_cell_fraction(h, {i});
            const bool est = frac > 0.0 && frac >= alpha_floor;
            out.set_estimable(h, {i}, est);
            out.set(h, {i}, est ? observed.rate(h, {i}) / frac : 0.0);
        }
    }
    return out;
}

RateMatrix naive_estimate(std::span<const TripEvent> trips, const AvailabilityTimeline& timeline,
                          double alpha_floor) {
    const DistanceClassTable own_cell(timeline.grid(), 0.0);
    return naive_estimate(trips, nearest_profile(timeline, own_cell), timeline.days(), alpha_floor);
}

} // namespace mmdemand

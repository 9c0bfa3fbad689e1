#pragma once

// Reference computations for tests. Each one is written from the model's
// definition without calling the library routine it checks.

#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "mmdemand/em.hpp"
#include "mmdemand/grid.hpp"
#include "mmdemand/ingest.hpp"
#include "mmdemand/timeline.hpp"

namespace mmdemand::oracle {

/// Distinct center-to-center distances strictly below dist_max on a square
/// lattice, by direct enumeration of (drow, dcol) pairs.
std::vector<double> lattice_distances(double width, double dist_max);

/// Half-normal probability of [a, b) by composite Simpson integration of the density.
double half_normal_mass(double sigma, double a, double b);

/// Vehicles in `cell` during the instant t + 0.5, i.e. after every event at
/// or before the integer second t.
std::int32_t count_during(const std::vector<AvailabilityEvent>& events, CellIndex cell, Seconds t);

/// Distance from cell i to the nearest cell with a vehicle during second t,
/// or infinity when there is none.
double nearest_distance(const std::vector<AvailabilityEvent>& events, const GridSpec& grid, CellIndex i, Seconds t);

struct RandomTimeline {
    GridSpec grid;
    std::vector<AvailabilityEvent> events;
    Seconds start = 0;
    std::int32_t days = 1;
    PeriodScheme periods;
};

/// A few vehicles appearing and leaving at random integer seconds on a small grid.
RandomTimeline random_timeline(std::mt19937_64& rng, std::int32_t rows, std::int32_t cols, double width,
                               std::int32_t days, PeriodScheme periods, std::int32_t vehicles);

/// Empirical probability that an arrival at a uniform random time of period h
/// in cell i, with a threshold drawn from the half-normal truncated at
/// dist_max, finds a vehicle no farther than its threshold. The stratified
/// variant is a Latin hypercube over (arrival time, threshold quantile).
double monte_carlo_alpha(const RandomTimeline& tl, std::int32_t h, CellIndex i, double sigma, double dist_max,
                         std::size_t samples, std::mt19937_64& rng, bool stratified = false);

/// Fraction of period time, averaged over days, with the nearest vehicle at
/// most `classes[l]` away; scanned second by second.
std::vector<double> scanned_perc(const RandomTimeline& tl, std::int32_t h, CellIndex i,
                                 const std::vector<double>& classes);

/// Vehicles in `cell` as seen by a trip starting at t: events before t plus
/// additions at t.
std::int32_t count_seen_by_trip(const std::vector<AvailabilityEvent>& events, CellIndex cell, Seconds t);

/// pi[x][i] from the definition: survival of the nearest class of i, times the
/// share of those nearest vehicles standing in the pickup cell.
std::vector<std::vector<double>> direct_pi(const std::vector<TripEvent>& trips,
                                           const std::vector<AvailabilityEvent>& events, const GridSpec& grid,
                                           const std::vector<double>& survival, const std::vector<double>& classes);

/// Observed-data log-likelihood over the given cells of a single period.
double loglik(const std::vector<std::vector<double>>& pi, const std::vector<double>& mu,
              const std::vector<double>& alpha, std::int32_t days);

/// Maximizes loglik over mu >= 0 by cyclic exact coordinate maximization
/// (bisection on each partial derivative).
std::vector<double> maximize_loglik(const std::vector<std::vector<double>>& pi, const std::vector<double>& alpha,
                                    std::int32_t days, int sweeps = 20000);

/// Column rank of a small dense matrix.
int column_rank(const std::vector<std::vector<double>>& rows, std::size_t cols, double tol = 1e-9);

/// Replays one day's trips from the given seeds, drop-offs before pickups at
/// equal times and drop-offs at or after day_end ignored. True when no pickup
/// finds its cell empty.
bool day_feasible(const std::vector<LocatedTrip>& trips, const std::map<std::int32_t, std::int32_t>& seeds,
                  Seconds day_end);

} // namespace mmdemand::oracle

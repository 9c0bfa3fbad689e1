#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mmdemand/choice_model.hpp"
#include "mmdemand/em.hpp"
#include "mmdemand/grid.hpp"
#include "mmdemand/pipeline.hpp"
#include "mmdemand/timeline.hpp"

namespace mmdemand {

enum class CellKind : std::uint8_t { cluster_center, border, isolated, none };

std::string_view to_string(CellKind k) noexcept;

/// True arrival rate per period for each kind: 10, 5, 2 and 0.
double true_rate(CellKind k) noexcept;

/// Synthetic city: three demand clusters (a center and its 8 neighbours),
/// a few isolated cells farther than 1 km from every center, the rest empty.
struct Layout {
    GridSpec grid;
    std::vector<CellKind> kinds;

    CellKind kind(CellIndex i) const noexcept { return kinds[static_cast<std::size_t>(i.value)]; }
    double rate(CellIndex i) const noexcept { return true_rate(kind(i)); }
    /// One character per cell (C, b, i, .), northernmost row first.
    std::string render() const;
};

/// The 12 x 12 experiment layout on `cell_width` meter cells.
Layout layout_grid(double cell_width = 400.0);

struct SimulationOptions {
    std::int32_t days = 30;
    /// Vehicles in every stocked cell; large enough never to run out.
    std::int32_t stock = 1000;
};

struct SimulatedData {
    std::vector<TripEvent> trips;
    AvailabilityTimeline timeline;
    /// Arrivals per cell per day, including users who found no vehicle.
    std::vector<double> realized_rate;
    std::size_t arrivals = 0;
};

/// One hour of service per day. Cluster centers are always stocked; every
/// other cell is stocked for the whole day with probability p. Each arrival
/// draws a threshold bin and takes a vehicle from its nearest stocked class
/// when that class is within the threshold, choosing uniformly among the
/// vehicles there; otherwise it leaves unobserved.
///
/// Stocking uses a generator seeded only by `seed`, compared against p, so
/// runs that differ only in p share both stocking draws and arrivals.
SimulatedData simulate_days(const Layout& layout, double p, const ThresholdDistribution& dist,
                            const DistanceClassTable& classes, std::uint64_t seed,
                            const SimulationOptions& opts = {});

/// The single one-hour period used by the experiments.
PeriodScheme experiment_periods();

struct ExperimentConfig {
    double cell_width = 400.0;
    std::int32_t days = 30;
    std::int32_t replications = 10;
    std::vector<double> p_values{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double p0 = 0.7;
    double dist_max = 1000.0;
    std::uint64_t seed = 2024;
    std::int32_t stock = 1000;
    std::int32_t threads = 1;
    EMConfig em;

    void validate() const;
};

enum class Algorithm : std::uint8_t { em, naive, realized };

std::string_view to_string(Algorithm a) noexcept;

/// Category filter for summaries; `all` pools every cell.
enum class Category : std::uint8_t { all, cluster_center, border, isolated, none };

std::string_view to_string(Category c) noexcept;

struct ErrorCell {
    Algorithm algorithm = Algorithm::em;
    Category category = Category::all;
    double p = 0.0;
    double median = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

/// Errors of one replication at one p, per cell (masked estimates count as 0).
struct ReplicationErrors {
    double p = 0.0;
    std::int32_t replication = 0;
    std::vector<double> em;
    std::vector<double> naive;
    std::vector<double> realized;
    /// Largest |em - naive| over cells.
    double em_naive_gap = 0.0;
    std::int32_t em_iterations = 0;
};

struct TrendChecks {
    /// For each p in (0, 0.5]: replications where the EM border max error is below naive's.
    std::vector<std::pair<double, std::int32_t>> border_wins;
    bool border_dominance = true;
    bool em_non_increasing = true;
    bool naive_non_increasing = true;
    /// Naive no-demand max error is zero and EM's is positive at p = 0.
    bool zero_availability_pattern = true;
    /// EM and naive agree within 1e-6 at p = 1.
    bool full_availability_agreement = true;
    bool all() const noexcept {
        return border_dominance && em_non_increasing && naive_non_increasing && zero_availability_pattern &&
               full_availability_agreement;
    }
};

struct ExperimentReport {
    ExperimentConfig config;
    Layout layout;
    std::vector<ErrorCell> summary;
    std::vector<ReplicationErrors> replications;
    TrendChecks trends;
    double seconds = 0.0;

    /// Summary entry for one (algorithm, category, p).
    const ErrorCell& at(Algorithm a, Category c, double p) const;
    /// Median and max error per category and algorithm, one column per p.
    void print_table(std::ostream& out) const;
    void write_csv(std::ostream& out) const;
    std::string to_json() const;
};

/// Pools errors over cells and replications, then takes the median and max.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Evaluates the qualitative trends over a finished report.
TrendChecks evaluate_trends(const ExperimentReport& report);

/// Two active cells 600 m apart on a 7 x 8 grid of 200 m cells, each holding
/// one vehicle throughout, with `trips_per_hour` instantaneous round trips
/// from each active cell every hour of every day.
PreparedInput two_point_fixture(std::int32_t days = 50, std::int32_t trips_per_hour = 10,
                                std::int32_t periods = 24);

struct SensitivityRow {
    double gamma = 0.0;
    double largest = 0.0;
    double p99 = 0.0;
    double median = 0.0;
    std::int32_t iterations = 0;
};

struct SensitivityReport {
    std::vector<SensitivityRow> rows;
    std::size_t estimable_entries = 0;

    void print_table(std::ostream& out) const;
    void write_csv(std::ostream& out) const;
};

/// Runs EM once per gamma with the gamma blend start and compares every
/// estimable rate against the gamma = 0 run.
SensitivityReport sensitivity_study(const PreparedInput& data, const ModelInputs& model,
                                    const std::vector<double>& gammas, const EMConfig& base);

/// Parameters for synthetic trip files.
struct SyntheticConfig {
    std::size_t trips = 10000;
    std::int32_t days = 30;
    /// Vehicles; zero writes a file without vehicle ids.
    std::int32_t vehicles = 800;
    LatLon center{41.8240, -71.4128};
    /// Half-width of the service area in meters.
    double radius = 8000.0;
    std::int32_t hotspots = 12;
    Seconds service_start = 6 * 3600;
    Seconds service_end = 22 * 3600;
    std::uint64_t seed = 7;
    /// Column names in the Kansas City open-data style instead of snake case.
    bool kc_style = false;
};

/// Writes a header and `cfg.trips` rows. With vehicles, each vehicle's trips
/// chain end-to-start except for occasional relocations.
void write_synthetic_trips(std::ostream& out, const SyntheticConfig& cfg);

} // namespace mmdemand

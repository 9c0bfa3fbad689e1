#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmdemand/archive.hpp"
#include "mmdemand/choice_model.hpp"
#include "mmdemand/em.hpp"
#include "mmdemand/error.hpp"
#include "mmdemand/grid.hpp"
#include "mmdemand/ingest.hpp"
#include "mmdemand/time.hpp"
#include "mmdemand/timeline.hpp"

namespace mmdemand {

enum class RebalanceMode { automatic, perfect, derive };

std::string_view to_string(RebalanceMode m) noexcept;
std::optional<RebalanceMode> parse_rebalance_mode(std::string_view s) noexcept;
std::string_view to_string(InitMode m) noexcept;

/// Explicit grid extent; when absent the grid is derived from the data.
struct FixedGrid {
    LatLon origin;
    std::int32_t rows = 1;
    std::int32_t cols = 1;
};

/// Every knob of one estimation run. Defaults match the planner tool.
struct EstimateConfig {
    double cell_width = 400.0;
    double p0 = 0.7;
    double dist_max = 1000.0;
    PeriodScheme periods = PeriodScheme::hourly();
    EMConfig em;
    RebalanceMode rebalance = RebalanceMode::automatic;
    /// Service-day boundary for rebalancing, seconds after local midnight.
    Seconds day_start_offset = 0;
    std::uint64_t seed = 0;
    /// Padding around the data's bounding box in meters; negative means one cell.
    double padding = -1.0;
    std::optional<FixedGrid> grid;
    SchemaConfig schema;

    /// Field-level problems, including an unachievable p0 for the class table.
    std::vector<FieldError> validation_errors() const;
    /// Throws ValidationError when validation_errors() is not empty.
    void validate() const;

    /// Canonical JSON of every result-affecting setting, embedded in manifests.
    std::string to_json() const;
    /// Inverse of to_json(). Throws ParseError.
    static EstimateConfig from_json(std::string_view text);
};

/// Pipeline stage names reported through ProgressFn.
namespace stage {
inline constexpr const char* ingest = "ingest";
inline constexpr const char* availability = "availability";
inline constexpr const char* choice = "choice_probabilities";
inline constexpr const char* em = "em";
inline constexpr const char* archive = "archive";
} // namespace stage

/// Reports the current stage and, during EM, the iteration number (0 otherwise).
using ProgressFn = std::function<void(std::string_view stage, std::int32_t iteration)>;

/// Trips and availability on a grid, ready for estimation.
struct PreparedInput {
    IngestReport report;
    GridSpec grid;
    Horizon horizon;
    RebalanceMode rebalance_used = RebalanceMode::perfect;
    AvailabilityTimeline timeline;
    std::vector<TripEvent> trips;
};

/// Parse, grid, reconstruct availability and bin trips.
PreparedInput prepare_input(std::istream& trips_csv, const EstimateConfig& cfg);

/// Everything EM needs that does not change between iterations.
struct ModelInputs {
    DistanceClassTable classes;
    ThresholdDistribution distribution;
    NearestBikeProfile profile;
    AlphaMatrix alpha;
    PiTable pi;
};

ModelInputs build_model_inputs(const AvailabilityTimeline& timeline, std::span<const TripEvent> trips, double p0,
                               double dist_max);

struct EstimateResult {
    ResultArchive archive;
    IngestReport report;
    EMDiagnostics diagnostics;
    ThresholdDistribution distribution;
    std::int32_t days = 0;
    std::size_t trips_used = 0;
    /// Estimable (period, cell) pairs.
    std::size_t estimable_entries = 0;
};

/// Parses, reconstructs availability, estimates with EM and the naive baseline
/// and assembles the result archive. `input_sha256` is recorded in the manifest.
EstimateResult estimate(std::istream& trips_csv, const EstimateConfig& cfg, const std::string& input_sha256 = {},
                        const ProgressFn& progress = {});

EstimateResult estimate_file(const std::filesystem::path& trips_csv, const EstimateConfig& cfg,
                             const ProgressFn& progress = {});

/// JSON object describing row counts, drops and the data extent.
std::string ingest_report_json(const IngestReport& report);

/// Lower-case hex SHA-256 of a byte string or a file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

} // namespace mmdemand

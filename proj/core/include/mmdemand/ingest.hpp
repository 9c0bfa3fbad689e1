#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmdemand/em.hpp"
#include "mmdemand/grid.hpp"
#include "mmdemand/time.hpp"
#include "mmdemand/timeline.hpp"

namespace mmdemand {

struct RawTrip {
    std::string trip_id;
    std::optional<std::string> vehicle_id;
    Seconds start_time = 0;
    Seconds end_time = 0;
    LatLon start;
    LatLon end;
};

namespace drop_reason {
inline constexpr const char* malformed = "malformed";
inline constexpr const char* end_before_start = "end_before_start";
inline constexpr const char* invalid_coordinate = "invalid_coordinate";
inline constexpr const char* out_of_box = "out_of_box";
inline constexpr const char* out_of_hours = "out_of_hours";
} // namespace drop_reason

struct BoundingBox {
    double lat_min = 0.0, lat_max = 0.0, lon_min = 0.0, lon_max = 0.0;
};

struct IngestReport {
    std::size_t rows_read = 0;
    std::size_t rows_kept = 0;
    std::map<std::string, std::size_t> dropped;
    /// First few per-row problems, "row N: reason".
    std::vector<std::string> messages;
    std::optional<Seconds> first_start;
    std::optional<Seconds> last_start;
    std::int32_t days = 0;
    std::optional<BoundingBox> bounding_box;
    std::size_t rebalance_moves = 0;
    std::size_t seeded_vehicles = 0;

    std::size_t dropped_total() const noexcept;
    void drop(std::size_t row, const std::string& reason, const std::string& detail = {});
};

/// Canonical column names and delimiter. `columns` maps a canonical name
/// (start_time, end_time, start_lat, start_lon, end_lat, end_lon, vehicle_id,
/// trip_id) to the header used in the file; unmapped columns are matched
/// against a built-in alias list.
struct SchemaConfig {
    char delimiter = ',';
    int utc_offset_minutes = 0;
    std::map<std::string, std::string> columns;

    /// JSON document: {"delimiter": ",", "utc_offset": "-05:00", "columns": {...}}.
    static SchemaConfig load(const std::filesystem::path& path);
};

struct ParsedTrips {
    std::vector<RawTrip> trips;
    IngestReport report;
};

/// Streaming parse of delimited trip rows. Throws ParseError for an
/// unreadable header or missing required columns; bad rows are dropped and
/// recorded in the report.
ParsedTrips parse_trips(std::istream& in, const SchemaConfig& schema = {});
ParsedTrips parse_trips_file(const std::filesystem::path& path, const SchemaConfig& schema = {});

/// Splits one delimited line honouring double quotes.
std::vector<std::string> split_delimited(std::string_view line, char delimiter);

struct LocatedTrip {
    std::size_t source = 0;
    /// Dense vehicle number, -1 when the dataset has no vehicle ids.
    std::int32_t vehicle = -1;
    Seconds start_time = 0;
    Seconds end_time = 0;
    CellIndex start_cell;
    CellIndex end_cell;
};

/// Maps trips onto grid cells; trips with an endpoint outside the grid are
/// dropped as out_of_box and the report's kept count adjusted.
std::vector<LocatedTrip> locate_trips(std::span<const RawTrip> trips, const GridSpec& grid, IngestReport& report);

/// Vehicle-tracked availability: a vehicle is available at its drop-off cell
/// until its next pickup and, before its first pickup, at the pickup cell from
/// the start of that service day. A pickup away from the last drop-off cell
/// inserts a rebalance move at the midpoint of the idle interval. Throws
/// ValidationError without vehicle ids and DataIntegrityError for
/// overlapping trips of one vehicle.
std::vector<AvailabilityEvent> derive_availability(std::span<const LocatedTrip> trips, IngestReport* report = nullptr,
                                                   Seconds day_start_offset = 0);

/// Seeds each service day with the minimum per-cell vehicle counts that make
/// the day's pickups feasible given same-day drop-offs, and removes every
/// vehicle at the end of the day.
std::vector<AvailabilityEvent> perfect_rebalance(std::span<const LocatedTrip> trips, IngestReport* report = nullptr,
                                                 Seconds day_start_offset = 0);

/// Per-cell minimum seeds for one day's trips; exposed for testing.
std::map<std::int32_t, std::int32_t> minimal_seeds(std::span<const LocatedTrip> day_trips, Seconds day_end);

struct Horizon {
    Seconds start = 0;
    std::int32_t days = 1;
};

/// Midnight-aligned horizon. With trips it spans the days holding a trip
/// start, so drop-offs after the last such day fall outside and must be
/// clipped with clip_to_horizon(); without trips it covers every event.
Horizon covering_horizon(std::span<const LocatedTrip> trips, std::span<const AvailabilityEvent> events);

/// Removes events after the horizon end. They cannot affect any counted day.
std::vector<AvailabilityEvent> clip_to_horizon(std::vector<AvailabilityEvent> events, const Horizon& horizon);

/// Trip starts inside the service window; others are counted as out_of_hours.
std::vector<TripEvent> bin_trips(std::span<const LocatedTrip> trips, const PeriodScheme& periods,
                                 IngestReport* report = nullptr);

} // namespace mmdemand

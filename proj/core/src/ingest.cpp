#include "mmdemand/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "mmdemand/error.hpp"

namespace mmdemand {
namespace {

constexpr std::size_t kMaxMessages = 20;

const std::array<const char*, 6> kRequired = {"start_time", "end_time", "start_lat",
                                              "start_lon",  "end_lat",  "end_lon"};

const std::map<std::string, std::vector<std::string>>& aliases() {
    static const std::map<std::string, std::vector<std::string>> table = {
        {"start_time", {"start_time", "started_at", "starttime", "start_date", "start_datetime", "trip_start",
                        "start"}},
        {"end_time", {"end_time", "ended_at", "endtime", "stoptime", "stop_time", "end_date", "end_datetime",
                      "trip_end", "end"}},
        {"start_lat", {"start_lat", "start_latitude", "start_station_latitude", "origin_lat", "start_y"}},
        {"start_lon", {"start_lon", "start_lng", "start_long", "start_longitude", "start_station_longitude",
                       "origin_lon", "origin_lng", "start_x"}},
        {"end_lat", {"end_lat", "end_latitude", "end_station_latitude", "destination_lat", "end_y"}},
        {"end_lon", {"end_lon", "end_lng", "end_long", "end_longitude", "end_station_longitude",
                     "destination_lon", "destination_lng", "end_x"}},
        {"vehicle_id", {"vehicle_id", "bike_id", "bikeid", "scooter_id", "device_id", "vehicle"}},
        {"trip_id", {"trip_id", "tripid", "id", "ride_id"}},
    };
    return table;
}

std::string normalize_header(std::string_view h) {
    std::string out;
    for (char ch : h) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

bool valid_coordinate(LatLon p) {
    return p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

std::optional<int> parse_utc_offset(std::string_view s) {
    if (s.empty()) return 0;
    int sign = 1;
    if (s.front() == '+' || s.front() == '-') {
        sign = s.front() == '-' ? -1 : 1;
        s.remove_prefix(1);
    }
    int h = 0, m = 0;
    const auto colon = s.find(':');
    const std::string_view hs = s.substr(0, colon);
    auto [p1, e1] = std::from_chars(hs.data(), hs.data() + hs.size(), h);
    if (e1 != std::errc{} || p1 != hs.data() + hs.size()) return std::nullopt;
    if (colon != std::string_view::npos) {
        const std::string_view ms = s.substr(colon + 1);
        auto [p2, e2] = std::from_chars(ms.data(), ms.data() + ms.size(), m);
        if (e2 != std::errc{} || p2 != ms.data() + ms.size()) return std::nullopt;
    }
    return sign * (h * 60 + m);
}

Seconds service_day_start(Seconds t, Seconds offset) { return day_of(t - offset) * kSecondsPerDay + offset; }

} // namespace

std::size_t IngestReport::dropped_total() const noexcept {
    std::size_t n = 0;
    for (const auto& [reason, count] : dropped) n += count;
    return n;
}

void IngestReport::drop(std::size_t row, const std::string& reason, const std::string& detail) {
    ++dropped[reason];
    if (messages.size() < kMaxMessages) {
        messages.push_back("row " + std::to_string(row) + ": " + reason + (detail.empty() ? "" : " (" + detail + ")"));
    }
}

SchemaConfig SchemaConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open schema config " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("schema config " + path.string() + ": " + e.what());
    }
    SchemaConfig cfg;
    if (doc.contains("delimiter")) {
        const auto d = doc.at("delimiter").get<std::string>();
        if (d.size() != 1) throw ParseError("schema config: delimiter must be a single character");
        cfg.delimiter = d == "\\t" ? '\t' : d[0];
    }
    if (doc.contains("utc_offset")) {
        const auto off = parse_utc_offset(doc.at("utc_offset").get<std::string>());
        if (!off) throw ParseError("schema config: utc_offset must look like -05:00");
        cfg.utc_offset_minutes = *off;
    }
    if (doc.contains("columns")) {
        for (const auto& [canonical, header] : doc.at("columns").items()) {
            cfg.columns[canonical] = header.get<std::string>();
        }
    }
    return cfg;
}

std::vector<std::string> split_delimited(std::string_view line, char delimiter) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delimiter) {
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
    return out;
}

ParsedTrips parse_trips(std::istream& in, const SchemaConfig& schema) {
    ParsedTrips result;
    IngestReport& report = result.report;

    std::string line;
    if (!std::getline(in, line)) throw ParseError("trip file is empty: a header row is required");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = split_delimited(line, schema.delimiter);
    if (header.empty() || (header.size() == 1 && header[0].empty())) throw ParseError("unparseable header row");

    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t c = 0; c < header.size(); ++c) by_name.emplace(normalize_header(header[c]), c);

    std::map<std::string, std::size_t> col;
    for (const auto& [canonical, names] : aliases()) {
        if (auto it = schema.columns.find(canonical); it != schema.columns.end()) {
            auto hit = by_name.find(normalize_header(it->second));
            if (hit == by_name.end()) {
                throw ParseError("configured column '" + it->second + "' for " + canonical + " not in header");
            }
            col[canonical] = hit->second;
            continue;
        }
        for (const std::string& alias : names) {
            if (auto hit = by_name.find(alias); hit != by_name.end()) {
                col[canonical] = hit->second;
                break;
            }
        }
    }
    std::vector<std::string> missing;
    for (const char* req : kRequired) {
        if (!col.contains(req)) missing.emplace_back(req);
    }
    if (!missing.empty()) {
        std::string msg = "missing required columns:";
        for (const auto& m : missing) msg += " " + m;
        throw ParseError(msg);
    }
    const auto vehicle_col = col.contains("vehicle_id") ? std::optional(col["vehicle_id"]) : std::nullopt;
    const auto trip_col = col.contains("trip_id") ? std::optional(col["trip_id"]) : std::nullopt;

    bool have_box = false;
    BoundingBox box;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        ++report.rows_read;
        const auto fields = split_delimited(line, schema.delimiter);
        const auto field = [&](const char* name) -> std::string_view {
            const std::size_t c = col.at(name);
            return c < fields.size() ? std::string_view(fields[c]) : std::string_view{};
        };

        const auto start = parse_timestamp(field("start_time"), schema.utc_offset_minutes);
        const auto end = parse_timestamp(field("end_time"), schema.utc_offset_minutes);
        const auto slat = parse_double(field("start_lat"));
        const auto slon = parse_double(field("start_lon"));
        const auto elat = parse_double(field("end_lat"));
        const auto elon = parse_double(field("end_lon"));
        if (!start || !end || !slat || !slon || !elat || !elon) {
            report.drop(row, drop_reason::malformed);
            continue;
        }
        RawTrip t;
        t.start_time = *start;
        t.end_time = *end;
        t.start = {*slat, *slon};
        t.end = {*elat, *elon};
        if (t.end_time < t.start_time) {
            report.drop(row, drop_reason::end_before_start);
            continue;
        }
        if (!valid_coordinate(t.start) || !valid_coordinate(t.end)) {
            report.drop(row, drop_reason::invalid_coordinate);
            continue;
        }
        if (vehicle_col && *vehicle_col < fields.size() && !fields[*vehicle_col].empty()) {
            t.vehicle_id = fields[*vehicle_col];
        }
        t.trip_id = trip_col && *trip_col < fields.size() ? fields[*trip_col] : std::to_string(row - 1);

        for (const LatLon p : {t.start, t.end}) {
            if (!have_box) {
                box = {p.lat, p.lat, p.lon, p.lon};
                have_box = true;
            }
            box.lat_min = std::min(box.lat_min, p.lat);
            box.lat_max = std::max(box.lat_max, p.lat);
            box.lon_min = std::min(box.lon_min, p.lon);
            box.lon_max = std::max(box.lon_max, p.lon);
        }
        report.first_start = std::min(report.first_start.value_or(t.start_time), t.start_time);
        report.last_start = std::max(report.last_start.value_or(t.start_time), t.start_time);
        result.trips.push_back(std::move(t));
    }
    report.rows_kept = result.trips.size();
    if (have_box) report.bounding_box = box;
    if (report.first_start) {
        report.days = static_cast<std::int32_t>(day_of(*report.last_start) - day_of(*report.first_start) + 1);
    }
    return result;
}

ParsedTrips parse_trips_file(const std::filesystem::path& path, const SchemaConfig& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open trip file " + path.string());
    return parse_trips(in, schema);
}

std::vector<LocatedTrip> locate_trips(std::span<const RawTrip> trips, const GridSpec& grid, IngestReport& report) {
    std::vector<LocatedTrip> out;
    out.reserve(trips.size());
    std::map<std::string, std::int32_t> vehicles;
    for (std::size_t k = 0; k < trips.size(); ++k) {
        const RawTrip& t = trips[k];
        const auto s = locate(grid, t.start);
        const auto e = locate(grid, t.end);
        if (!s || !e) {
            report.drop(k + 2, drop_reason::out_of_box, t.trip_id);
            if (report.rows_kept > 0) --report.rows_kept;
            continue;
        }
        LocatedTrip lt;
        lt.source = k;
        lt.start_time = t.start_time;
        lt.end_time = t.end_time;
        lt.start_cell = *s;
        lt.end_cell = *e;
        if (t.vehicle_id) {
            lt.vehicle = vehicles.try_emplace(*t.vehicle_id, static_cast<std::int32_t>(vehicles.size())).first->second;
        }
        out.push_back(lt);
    }
    return out;
}

std::vector<AvailabilityEvent> derive_availability(std::span<const LocatedTrip> trips, IngestReport* report,
                                                   Seconds day_start_offset) {
    for (const LocatedTrip& t : trips) {
        if (t.vehicle < 0) {
            throw ValidationError("rebalance", "vehicle-tracked availability needs a vehicle_id for every trip; "
                                                 "use perfect rebalancing instead");
        }
    }
    std::vector<std::size_t> order(trips.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (trips[a].vehicle != trips[b].vehicle) return trips[a].vehicle < trips[b].vehicle;
        return trips[a].start_time < trips[b].start_time;
    });

    std::vector<AvailabilityEvent> events;
    events.reserve(trips.size() * 2 + 16);
    std::size_t moves = 0;
    std::size_t seeded = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const LocatedTrip& t = trips[order[k]];
        const bool first = k == 0 || trips[order[k - 1]].vehicle != t.vehicle;
        if (first) {
            events.push_back({service_day_start(t.start_time, day_start_offset), t.start_cell, +1,
                              EventSource::rebalance_add});
            ++seeded;
        } else {
            const LocatedTrip& prev = trips[order[k - 1]];
            if (t.start_time < prev.end_time) {
                std::ostringstream msg;
                msg << "vehicle #" << t.vehicle << " has overlapping trips starting " << format_timestamp(prev.start_time)
                    << " and " << format_timestamp(t.start_time);
                throw DataIntegrityError(msg.str());
            }
            if (t.start_cell != prev.end_cell) {
                const Seconds mid = prev.end_time + (t.start_time - prev.end_time) / 2;
                events.push_back({mid, prev.end_cell, -1, EventSource::rebalance_remove});
                events.push_back({mid, t.start_cell, +1, EventSource::rebalance_add});
                ++moves;
            }
        }
        events.push_back({t.start_time, t.start_cell, -1, EventSource::trip_start});
        events.push_back({t.end_time, t.end_cell, +1, EventSource::trip_end});
    }
    if (report != nullptr) {
        report->rebalance_moves += moves;
        report->seeded_vehicles += seeded;
    }
    std::stable_sort(events.begin(), events.end(), replay_before);
    return events;
}

std::map<std::int32_t, std::int32_t> minimal_seeds(std::span<const LocatedTrip> day_trips, Seconds day_end) {
    std::vector<AvailabilityEvent> replay;
    for (const LocatedTrip& t : day_trips) {
        replay.push_back({t.start_time, t.start_cell, -1, EventSource::trip_start});
        if (t.end_time < day_end) replay.push_back({t.end_time, t.end_cell, +1, EventSource::trip_end});
    }
    std::stable_sort(replay.begin(), replay.end(), replay_before);
    std::map<std::int32_t, std::int32_t> running;
    std::map<std::int32_t, std::int32_t> seeds;
    for (const AvailabilityEvent& e : replay) {
        std::int32_t& r = running[e.cell.value];
        r += e.delta;
        if (r < 0) {
            seeds[e.cell.value] += -r;
            r = 0;
        }
    }
    return seeds;
}

std::vector<AvailabilityEvent> perfect_rebalance(std::span<const LocatedTrip> trips, IngestReport* report,
                                                 Seconds day_start_offset) {
    std::vector<std::size_t> order(trips.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return trips[a].start_time < trips[b].start_time; });

    std::vector<AvailabilityEvent> events;
    std::size_t seeded = 0;
    std::size_t k = 0;
    std::vector<LocatedTrip> day;
    while (k < order.size()) {
        const Seconds day_start = service_day_start(trips[order[k]].start_time, day_start_offset);
        const Seconds day_end = day_start + kSecondsPerDay;
        day.clear();
        while (k < order.size() && trips[order[k]].start_time < day_end) day.push_back(trips[order[k++]]);

        const auto seeds = minimal_seeds(day, day_end);
        std::map<std::int32_t, std::int32_t> remaining = seeds;
        for (const auto& [cell, n] : seeds) {
            events.push_back({day_start, {cell}, n, EventSource::rebalance_add});
            seeded += static_cast<std::size_t>(n);
        }
        for (const LocatedTrip& t : day) {
            events.push_back({t.start_time, t.start_cell, -1, EventSource::trip_start});
            --remaining[t.start_cell.value];
            if (t.end_time < day_end) {
                events.push_back({t.end_time, t.end_cell, +1, EventSource::trip_end});
                ++remaining[t.end_cell.value];
            }
        }
        for (const auto& [cell, n] : remaining) {
            if (n > 0) events.push_back({day_end, {cell}, -n, EventSource::rebalance_remove});
        }
    }
    if (report != nullptr) report->seeded_vehicles += seeded;
    std::stable_sort(events.begin(), events.end(), replay_before);
    return events;
}

Horizon covering_horizon(std::span<const LocatedTrip> trips, std::span<const AvailabilityEvent> events) {
    std::optional<Seconds> lo, hi, last_trip;
    for (const LocatedTrip& t : trips) {
        lo = std::min(lo.value_or(t.start_time), t.start_time);
        hi = std::max(hi.value_or(t.end_time), t.end_time);
        last_trip = std::max(last_trip.value_or(t.start_time), t.start_time);
    }
    for (const AvailabilityEvent& e : events) {
        lo = std::min(lo.value_or(e.time), e.time);
        hi = std::max(hi.value_or(e.time), e.time);
    }
    Horizon h;
    if (!lo) return h;
    h.start = day_of(*lo) * kSecondsPerDay;
    std::int64_t days = (*hi - h.start + kSecondsPerDay - 1) / kSecondsPerDay;
    if (last_trip) days = day_of(*last_trip) - day_of(*lo) + 1;
    h.days = static_cast<std::int32_t>(std::max<std::int64_t>(1, days));
    return h;
}

std::vector<AvailabilityEvent> clip_to_horizon(std::vector<AvailabilityEvent> events, const Horizon& horizon) {
    const Seconds end = horizon.start + static_cast<Seconds>(horizon.days) * kSecondsPerDay;
    std::erase_if(events, [&](const AvailabilityEvent& e) { return e.time > end; });
    return events;
}

std::vector<TripEvent> bin_trips(std::span<const LocatedTrip> trips, const PeriodScheme& periods,
                                 IngestReport* report) {
    std::vector<TripEvent> out;
    out.reserve(trips.size());
    for (const LocatedTrip& t : trips) {
        const auto h = periods.period_of(second_of_day(t.start_time));
        if (!h) {
            if (report != nullptr) {
                ++report->dropped[drop_reason::out_of_hours];
                if (report->rows_kept > 0) --report->rows_kept;
            }
            continue;
        }
        out.push_back({t.start_time, *h, t.start_cell});
    }
    return out;
}

} // namespace mmdemand

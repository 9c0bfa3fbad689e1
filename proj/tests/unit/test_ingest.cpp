#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "mmdemand/error.hpp"
#include "mmdemand/ingest.hpp"
#include "oracles.hpp"

using namespace mmdemand;

namespace {

ParsedTrips parse(const std::string& text, SchemaConfig schema = {}) {
    std::istringstream in(text);
    return parse_trips(in, schema);
}

constexpr const char* kHeader = "trip_id,vehicle_id,start_time,end_time,start_lat,start_lon,end_lat,end_lon\n";

LocatedTrip trip(std::int32_t vehicle, Seconds start, Seconds end, std::int32_t from, std::int32_t to) {
    LocatedTrip t;
    t.vehicle = vehicle;
    t.start_time = start;
    t.end_time = end;
    t.start_cell = CellIndex{from};
    t.end_cell = CellIndex{to};
    return t;
}

} // namespace

TEST(ParseTrips, HeaderOnlyIsEmptyAndClean) {
    const auto p = parse(kHeader);
    EXPECT_TRUE(p.trips.empty());
    EXPECT_EQ(p.report.rows_read, 0u);
    EXPECT_EQ(p.report.dropped_total(), 0u);
}

TEST(ParseTrips, DropsRowsWithReasons) {
    const auto p = parse(std::string(kHeader) +
                         "1,a,2019-07-01 08:00:00,2019-07-01 08:10:00,41.82,-71.41,41.83,-71.40\n"
                         "2,a,2019-07-01 09:00:00,2019-07-01 08:10:00,41.82,-71.41,41.83,-71.40\n"
                         "3,b,garbage,2019-07-01 08:10:00,41.82,-71.41,41.83,-71.40\n"
                         "4,b,2019-07-01 08:00:00,2019-07-01 08:10:00,95.0,-71.41,41.83,-71.40\n");
    ASSERT_EQ(p.trips.size(), 1u);
    EXPECT_EQ(p.report.rows_read, 4u);
    EXPECT_EQ(p.report.dropped.at(drop_reason::end_before_start), 1u);
    EXPECT_EQ(p.report.dropped.at(drop_reason::malformed), 1u);
    EXPECT_EQ(p.report.dropped.at(drop_reason::invalid_coordinate), 1u);
    EXPECT_FALSE(p.report.messages.empty());
}

TEST(ParseTrips, KansasCityHeadersAndTimestamps) {
    const auto p = parse("Trip ID,Start Time,End Time,Start Latitude,Start Longitude,End Latitude,End Longitude\n"
                         "T1,07/01/2019 01:02:55 PM,07/01/2019 01:11:03 PM,39.1,-94.58,39.11,-94.57\n");
    ASSERT_EQ(p.trips.size(), 1u);
    EXPECT_EQ(second_of_day(p.trips[0].start_time), 13 * 3600 + 2 * 60 + 55);
    EXPECT_FALSE(p.trips[0].vehicle_id.has_value());
    EXPECT_DOUBLE_EQ(p.trips[0].end.lon, -94.57);
}

TEST(ParseTrips, ConfiguredColumnsDelimiterAndOffset) {
    SchemaConfig schema;
    schema.delimiter = ';';
    schema.utc_offset_minutes = -300;
    schema.columns = {{"start_time", "begin"}, {"end_time", "finish"}};
    const auto p = parse("begin;finish;start_lat;start_lon;end_lat;end_lon\n"
                         "2019-07-01T13:00:00Z;2019-07-01T13:30:00Z;41.8;-71.4;41.81;-71.41\n",
                         schema);
    ASSERT_EQ(p.trips.size(), 1u);
    EXPECT_EQ(second_of_day(p.trips[0].start_time), 8 * 3600);
}

TEST(ParseTrips, MissingRequiredColumnIsAParseError) {
    EXPECT_THROW(parse("start_time,end_time,start_lat\n"), ParseError);
    EXPECT_THROW(parse(""), ParseError);
}

TEST(ParseTrips, QuotedFieldsAndRepeatParsesAgree) {
    const std::string text = std::string(kHeader) +
                             "\"1\",\"veh, 7\",2019-07-01 08:00:00,2019-07-01 08:10:00,41.82,-71.41,41.83,-71.40\n";
    const auto a = parse(text);
    const auto b = parse(text);
    ASSERT_EQ(a.trips.size(), 1u);
    EXPECT_EQ(*a.trips[0].vehicle_id, "veh, 7");
    EXPECT_EQ(a.trips[0].start_time, b.trips[0].start_time);
    EXPECT_EQ(a.report.rows_kept, b.report.rows_kept);
}

TEST(DeriveAvailability, RoundTripMovesTheVehicle) {
    const std::vector<LocatedTrip> trips{trip(0, 9 * 3600, 9 * 3600 + 600, 1, 2)};
    const auto events = derive_availability(trips);
    const AvailabilityTimeline tl(events, GridSpec::fixed({41.8, -71.4}, 400.0, 1, 3), 0, 1,
                                  PeriodScheme::hourly());
    EXPECT_EQ(tl.count_at({1}, 8 * 3600), 1);
    EXPECT_EQ(tl.count_at({2}, 8 * 3600), 0);
    EXPECT_EQ(tl.count_at({1}, 9 * 3600 + 300), 0);
    EXPECT_EQ(tl.count_at({2}, 10 * 3600), 1);
}

TEST(DeriveAvailability, PickupAwayFromDropoffInsertsOneMove) {
    const std::vector<LocatedTrip> trips{trip(0, 1000, 2000, 0, 1), trip(0, 5000, 6000, 2, 0)};
    IngestReport report;
    const auto events = derive_availability(trips, &report);
    EXPECT_EQ(report.rebalance_moves, 1u);
    std::size_t adds = 0;
    for (const auto& e : events) adds += e.source == EventSource::rebalance_add ? 1 : 0;
    EXPECT_EQ(adds, 2u);
}

TEST(DeriveAvailability, NeedsVehicleIdsAndRejectsOverlaps) {
    EXPECT_THROW(derive_availability(std::vector<LocatedTrip>{trip(-1, 0, 10, 0, 0)}), ValidationError);
    EXPECT_THROW(derive_availability(std::vector<LocatedTrip>{trip(0, 0, 100, 0, 1), trip(0, 50, 120, 1, 0)}),
                 DataIntegrityError);
}

TEST(DeriveAvailability, ReplayMatchesPerVehicleIntervals) {
    std::mt19937_64 rng(50);
    const GridSpec g = GridSpec::fixed({41.8, -71.4}, 400.0, 4, 4);
    std::vector<LocatedTrip> trips;
    struct Interval {
        Seconds a, b;
        std::int32_t cell;
    };
    std::vector<Interval> intervals;
    std::uniform_int_distribution<std::int32_t> cell(0, 15);
    for (std::int32_t v = 0; v < 50; ++v) {
        Seconds t = 6 * 3600 + static_cast<Seconds>(rng() % 3600);
        std::int32_t at = cell(rng);
        intervals.push_back({0, t, at});
        const int n = 1 + static_cast<int>(rng() % 4);
        for (int k = 0; k < n; ++k) {
            const Seconds end = t + 60 + static_cast<Seconds>(rng() % 1800);
            const std::int32_t to = cell(rng);
            trips.push_back(trip(v, t, end, at, to));
            const Seconds next = end + static_cast<Seconds>(rng() % 5000);
            const std::int32_t from = rng() % 3 == 0 ? cell(rng) : to;
            if (k + 1 == n) {
                intervals.push_back({end, kSecondsPerDay, to});
            } else if (from == to) {
                intervals.push_back({end, next, to});
            } else {
                const Seconds mid = end + (next - end) / 2;
                intervals.push_back({end, mid, to});
                intervals.push_back({mid, next, from});
            }
            t = next;
            at = from;
        }
    }
    std::shuffle(trips.begin(), trips.end(), rng);
    const AvailabilityTimeline tl(derive_availability(trips), g, 0, 1, PeriodScheme::hourly());
    for (Seconds t = 6 * 3600; t < 20 * 3600; t += 97) {
        for (std::int32_t c = 0; c < 16; ++c) {
            std::int32_t expected = 0;
            for (const Interval& iv : intervals) expected += iv.cell == c && iv.a <= t && t <= iv.b ? 1 : 0;
            ASSERT_EQ(tl.count_at({c}, t), expected) << "t=" << t << " cell=" << c;
        }
    }
}

TEST(PerfectRebalance, SeedsPickupsBeforeAnyDropoff) {
    const Seconds end = kSecondsPerDay;
    const std::vector<LocatedTrip> two{trip(-1, 100, 200, 0, 1), trip(-1, 300, 400, 0, 1)};
    EXPECT_EQ(minimal_seeds(two, end).at(0), 2);
    const std::vector<LocatedTrip> covered{trip(-1, 100, 200, 1, 0), trip(-1, 300, 400, 0, 1)};
    const auto seeds = minimal_seeds(covered, end);
    EXPECT_EQ(seeds.count(0), 0u);
    EXPECT_EQ(seeds.at(1), 1);
}

TEST(PerfectRebalance, EmptyDaysHaveNoVehicles) {
    const std::vector<LocatedTrip> trips{trip(-1, 9 * 3600, 9 * 3600 + 60, 0, 1),
                                         trip(-1, 2 * kSecondsPerDay + 9 * 3600, 2 * kSecondsPerDay + 9 * 3600 + 60, 1, 0)};
    const auto events = perfect_rebalance(trips);
    const AvailabilityTimeline tl(events, GridSpec::fixed({41.8, -71.4}, 400.0, 1, 2), 0, 3, PeriodScheme::hourly());
    for (Seconds t = kSecondsPerDay + 1; t < 2 * kSecondsPerDay; t += 3600) {
        EXPECT_EQ(tl.count_at({0}, t) + tl.count_at({1}, t), 0);
    }
}

TEST(PerfectRebalance, SeedsAreFeasibleAndMinimal) {
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<LocatedTrip> day;
        const int n = 1 + static_cast<int>(rng() % 20);
        for (int k = 0; k < n; ++k) {
            const Seconds s = static_cast<Seconds>(rng() % 80000);
            day.push_back(trip(-1, s, s + static_cast<Seconds>(rng() % 7200), static_cast<std::int32_t>(rng() % 4),
                               static_cast<std::int32_t>(rng() % 4)));
        }
        const auto seeds = minimal_seeds(day, kSecondsPerDay);
        ASSERT_TRUE(oracle::day_feasible(day, seeds, kSecondsPerDay));
        for (const auto& [c, v] : seeds) {
            auto fewer = seeds;
            fewer[c] = v - 1;
            EXPECT_FALSE(oracle::day_feasible(day, fewer, kSecondsPerDay));
        }
    }
}

TEST(Horizon, SpansTripDaysAndClipsLateDropoffs) {
    const std::vector<LocatedTrip> trips{trip(-1, 23 * 3600, kSecondsPerDay + 600, 0, 1)};
    const auto events = perfect_rebalance(trips);
    const Horizon h = covering_horizon(trips, events);
    EXPECT_EQ(h.start, 0);
    EXPECT_EQ(h.days, 1);
    for (const auto& e : clip_to_horizon(events, h)) EXPECT_LE(e.time, kSecondsPerDay);
}

TEST(BinTrips, OutsideServiceHoursAreCounted) {
    const std::vector<LocatedTrip> trips{trip(-1, 5 * 3600, 5 * 3600 + 60, 0, 0),
                                         trip(-1, 7 * 3600 + 5, 7 * 3600 + 60, 0, 0)};
    IngestReport report;
    const auto binned = bin_trips(trips, PeriodScheme::hourly(6 * 3600, 22 * 3600), &report);
    ASSERT_EQ(binned.size(), 1u);
    EXPECT_EQ(binned[0].period, 1);
    EXPECT_EQ(report.dropped.at(drop_reason::out_of_hours), 1u);
}

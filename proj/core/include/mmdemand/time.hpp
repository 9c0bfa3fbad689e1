#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace mmdemand {

/// Seconds since 1970-01-01 00:00 in the system's configured local civil time.
using Seconds = std::int64_t;

inline constexpr Seconds kSecondsPerDay = 86400;

/// Day number (days since 1970-01-01 local) containing `t`.
constexpr std::int64_t day_of(Seconds t) noexcept {
    return t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay);
}

constexpr Seconds second_of_day(Seconds t) noexcept { return t - day_of(t) * kSecondsPerDay; }

/// Parses "YYYY-MM-DD[ T]HH:MM[:SS[.fff]][Z|+HH:MM|-HHMM]" and
/// "MM/DD/YYYY HH:MM[:SS] [AM|PM]". Timestamps carrying an explicit zone are
/// converted to the local offset `local_utc_offset_minutes`; naive
/// timestamps are taken as local already. Fractional seconds are truncated.
std::optional<Seconds> parse_timestamp(std::string_view text, int local_utc_offset_minutes = 0);

/// "YYYY-MM-DD HH:MM:SS" in local time.
std::string format_timestamp(Seconds t);

/// "HH:MM" -> seconds after midnight; "24:00" is accepted.
std::optional<Seconds> parse_clock(std::string_view text);

/// Equal-length periods tiling a daily service window.
struct PeriodScheme {
    Seconds window_start = 0;
    Seconds window_end = kSecondsPerDay;
    std::int32_t count = 24;

    Seconds length() const noexcept { return (window_end - window_start) / count; }

    /// Period containing a time-of-day, or nullopt outside the service window.
    std::optional<std::int32_t> period_of(Seconds time_of_day) const noexcept {
        if (time_of_day < window_start || time_of_day >= window_end) return std::nullopt;
        return static_cast<std::int32_t>((time_of_day - window_start) / length());
    }

    Seconds period_start(std::int32_t h) const noexcept { return window_start + h * length(); }

    /// Throws ValidationError unless the window is inside one day and divides evenly.
    void validate() const;

    /// Hourly periods over [start, end).
    static PeriodScheme hourly(Seconds start = 0, Seconds end = kSecondsPerDay);
};

} // namespace mmdemand

#include "mmdemand/time.hpp"

#include <cctype>
#include <charconv>
#include <chrono>
#include <vector>
#include <cstdio>

#include "mmdemand/error.hpp"

namespace mmdemand {
namespace {

class Cursor {
public:
    explicit Cursor(std::string_view s) : s_(s) {}

    bool done() const { return pos_ >= s_.size(); }
    char peek() const { return done() ? '\0' : s_[pos_]; }
    bool eat(char c) {
        if (peek() != c) return false;
        ++pos_;
        return true;
    }
    void skip_spaces() {
        while (!done() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    std::optional<int> digits(std::size_t min_len, std::size_t max_len) {
        std::size_t n = 0;
        while (pos_ + n < s_.size() && n < max_len && std::isdigit(static_cast<unsigned char>(s_[pos_ + n]))) ++n;
        if (n < min_len) return std::nullopt;
        int v = 0;
        std::from_chars(s_.data() + pos_, s_.data() + pos_ + n, v);
        pos_ += n;
        return v;
    }
    std::string_view rest() const { return s_.substr(std::min(pos_, s_.size())); }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

std::optional<Seconds> civil(int y, int mo, int d, int h, int mi, int s) {
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) return std::nullopt;
    const auto days_since = sys_days{ymd}.time_since_epoch().count();
    return static_cast<Seconds>(days_since) * kSecondsPerDay + h * 3600 + mi * 60 + s;
}

// Optional ":SS[.fff]" after HH:MM.
bool read_seconds(Cursor& c, int& sec) {
    sec = 0;
    if (!c.eat(':')) return true;
    auto s = c.digits(2, 2);
    if (!s) return false;
    sec = *s;
    if (c.eat('.')) {
        if (!c.digits(1, 9)) return false;
    }
    return true;
}

} // namespace

std::optional<Seconds> parse_timestamp(std::string_view text, int local_utc_offset_minutes) {
    Cursor c(text);
    c.skip_spaces();
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;

    auto first = c.digits(1, 4);
    if (!first) return std::nullopt;
    if (c.eat('-')) {
        y = *first;
        auto m = c.digits(1, 2);
        if (!m || !c.eat('-')) return std::nullopt;
        auto dd = c.digits(1, 2);
        if (!dd) return std::nullopt;
        mo = *m;
        d = *dd;
        if (!c.eat('T') && !c.eat(' ')) return std::nullopt;
        auto hh = c.digits(1, 2);
        if (!hh || !c.eat(':')) return std::nullopt;
        auto mm = c.digits(2, 2);
        if (!mm || !read_seconds(c, sec)) return std::nullopt;
        h = *hh;
        mi = *mm;

        std::optional<int> zone_minutes;
        c.skip_spaces();
        if (c.eat('Z')) {
            zone_minutes = 0;
        } else if (c.peek() == '+' || c.peek() == '-') {
            const int sign = c.eat('-') ? -1 : (c.eat('+'), 1);
            auto zh = c.digits(2, 2);
            if (!zh) return std::nullopt;
            c.eat(':');
            auto zm = c.digits(2, 2);
            zone_minutes = sign * (*zh * 60 + (zm ? *zm : 0));
        }
        c.skip_spaces();
        if (!c.done()) return std::nullopt;
        auto t = civil(y, mo, d, h, mi, sec);
        if (t && zone_minutes) *t += static_cast<Seconds>(local_utc_offset_minutes - *zone_minutes) * 60;
        return t;
    }
    if (c.eat('/')) {
        mo = *first;
        auto dd = c.digits(1, 2);
        if (!dd || !c.eat('/')) return std::nullopt;
        auto yy = c.digits(4, 4);
        if (!yy) return std::nullopt;
        d = *dd;
        y = *yy;
        c.skip_spaces();
        auto hh = c.digits(1, 2);
        if (!hh || !c.eat(':')) return std::nullopt;
        auto mm = c.digits(2, 2);
        if (!mm || !read_seconds(c, sec)) return std::nullopt;
        h = *hh;
        mi = *mm;
        c.skip_spaces();
        const std::string_view rest = c.rest();
        if (rest == "AM" || rest == "am" || rest == "PM" || rest == "pm") {
            if (h < 1 || h > 12) return std::nullopt;
            const bool pm = rest[0] == 'P' || rest[0] == 'p';
            h = (h % 12) + (pm ? 12 : 0);
        } else if (!rest.empty()) {
            return std::nullopt;
        }
        return civil(y, mo, d, h, mi, sec);
    }
    return std::nullopt;
}

std::string format_timestamp(Seconds t) {
    using namespace std::chrono;
    const std::int64_t day = day_of(t);
    const Seconds sod = t - day * kSecondsPerDay;
    const year_month_day ymd{sys_days{days{day}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d:%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(sod / 3600), static_cast<int>(sod / 60 % 60), static_cast<int>(sod % 60));
    return buf;
}

std::optional<Seconds> parse_clock(std::string_view text) {
    Cursor c(text);
    auto hh = c.digits(1, 2);
    if (!hh || !c.eat(':')) return std::nullopt;
    auto mm = c.digits(2, 2);
    if (!mm || !c.done()) return std::nullopt;
    if (*mm > 59 || *hh > 24 || (*hh == 24 && *mm != 0)) return std::nullopt;
    return static_cast<Seconds>(*hh) * 3600 + *mm * 60;
}

void PeriodScheme::validate() const {
    std::vector<FieldError> errors;
    if (window_start < 0 || window_end > kSecondsPerDay || window_start >= window_end) {
        errors.push_back({"service_hours", "service window must be a non-empty interval within one day"});
    } else if (count < 1) {
        errors.push_back({"periods", "period count must be at least 1"});
    } else if ((window_end - window_start) % count != 0) {
        errors.push_back({"periods", "service window must divide into whole-second periods"});
    }
    if (!errors.empty()) throw ValidationError(std::move(errors));
}

PeriodScheme PeriodScheme::hourly(Seconds start, Seconds end) {
    PeriodScheme p;
    p.window_start = start;
    p.window_end = end;
    p.count = static_cast<std::int32_t>((end - start) / 3600);
    if ((end - start) % 3600 != 0 || p.count < 1) {
        throw ValidationError("periods", "hourly periods need a service window of whole hours");
    }
    return p;
}

} // namespace mmdemand

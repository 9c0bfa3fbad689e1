#include "mmdemand/params.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "mmdemand/error.hpp"

namespace mmdemand {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
bool read_number(std::string_view s, T& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

double number(std::string_view s, const std::string& field) {
    double v = 0.0;
    if (!read_number(s, v) || !std::isfinite(v)) throw ValidationError(field, "expected a number, got '" + std::string(s) + "'");
    return v;
}

std::int64_t integer(std::string_view s, const std::string& field) {
    std::int64_t v = 0;
    if (!read_number(s, v)) throw ValidationError(field, "expected an integer, got '" + std::string(s) + "'");
    return v;
}

} // namespace

void parse_init(std::string_view text, EMConfig& em, const std::string& field) {
    text = trim(text);
    if (text == "uniform") {
        em.init_mode = InitMode::uniform;
    } else if (text == "trips" || text == "trip") {
        em.init_mode = InitMode::trips;
    } else if (text.starts_with("gamma=")) {
        const double g = number(text.substr(6), field);
        if (!(g >= 0.0 && g <= 1.0)) throw ValidationError(field, "gamma must lie in [0, 1]");
        em.init_mode = InitMode::gamma_blend;
        em.gamma = g;
    } else {
        throw ValidationError(field, "expected uniform, trips or gamma=G");
    }
}

std::pair<Seconds, Seconds> parse_service_hours(std::string_view text, const std::string& field) {
    text = trim(text);
    const auto dash = text.find('-');
    if (dash == std::string_view::npos) throw ValidationError(field, "expected HH:MM-HH:MM");
    const auto a = parse_clock(trim(text.substr(0, dash)));
    const auto b = parse_clock(trim(text.substr(dash + 1)));
    if (!a || !b) throw ValidationError(field, "expected HH:MM-HH:MM");
    if (*b <= *a) throw ValidationError(field, "service window must end after it starts");
    return {*a, *b};
}

std::int32_t parse_period_count(std::string_view text, Seconds window_start, Seconds window_end,
                                const std::string& field) {
    text = trim(text);
    const Seconds span = window_end - window_start;
    if (text == "hourly") {
        if (span % 3600 != 0) throw ValidationError(field, "hourly periods need a service window of whole hours");
        return static_cast<std::int32_t>(span / 3600);
    }
    const std::int64_t n = integer(text, field);
    if (n < 1 || n > span) throw ValidationError(field, "period count must be between 1 and the window length in seconds");
    if (span % n != 0) throw ValidationError(field, "period count must divide the service window evenly");
    return static_cast<std::int32_t>(n);
}

int parse_utc_offset_text(std::string_view text, const std::string& field) {
    text = trim(text);
    if (text.empty() || text == "Z" || text == "0") return 0;
    int sign = 1;
    if (text.front() == '+' || text.front() == '-') {
        sign = text.front() == '-' ? -1 : 1;
        text.remove_prefix(1);
    }
    std::string digits;
    for (char c : text) {
        if (c != ':') digits.push_back(c);
    }
    int h = 0, m = 0;
    bool ok = false;
    if (digits.size() <= 2) {
        ok = read_number(digits, h);
    } else if (digits.size() == 4) {
        ok = read_number(std::string_view(digits).substr(0, 2), h) && read_number(std::string_view(digits).substr(2), m);
    }
    if (!ok || h > 14 || m > 59) throw ValidationError(field, "expected an offset like -05:00");
    return sign * (h * 60 + m);
}

std::vector<double> parse_number_list(std::string_view text, double lo, double hi, const std::string& field) {
    text = trim(text);
    std::vector<double> out;
    if (text.find(':') != std::string_view::npos) {
        const auto c1 = text.find(':');
        const auto c2 = text.find(':', c1 + 1);
        if (c2 == std::string_view::npos) throw ValidationError(field, "expected start:stop:step");
        const double a = number(text.substr(0, c1), field);
        const double b = number(text.substr(c1 + 1, c2 - c1 - 1), field);
        const double step = number(text.substr(c2 + 1), field);
        if (!(step > 0.0) || b < a) throw ValidationError(field, "expected start <= stop and a positive step");
        const auto n = static_cast<std::int64_t>(std::floor((b - a) / step + 1e-9));
        if (n > 100000) throw ValidationError(field, "too many values");
        for (std::int64_t k = 0; k <= n; ++k) {
            // round to the step's decimal grid so 0.1 steps print cleanly
            out.push_back(std::round((a + static_cast<double>(k) * step) * 1e9) / 1e9);
        }
    } else {
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto comma = text.find(',', pos);
            const auto item = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
            out.push_back(number(item, field));
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
    }
    for (double v : out) {
        if (v < lo || v > hi) {
            throw ValidationError(field, "values must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
    }
    return out;
}

EstimateConfig config_from_params(const std::map<std::string, std::string>& params) {
    static const std::set<std::string> known = {"cell_width", "p0",        "max_dist",   "periods", "service_hours",
                                                "init",       "tol",       "max_iters",  "alpha_floor",
                                                "rebalance",  "seed",      "utc_offset", "day_start",
                                                "threads",    "delimiter"};
    EstimateConfig cfg;
    std::vector<FieldError> errs;
    const auto guard = [&](auto&& fn) {
        try {
            fn();
        } catch (const ValidationError& e) {
            errs.insert(errs.end(), e.errors().begin(), e.errors().end());
        }
    };
    for (const auto& [k, v] : params) {
        if (!known.contains(k)) errs.push_back({k, "unknown parameter"});
    }
    const auto get = [&](const char* k) -> const std::string* {
        auto it = params.find(k);
        return it == params.end() ? nullptr : &it->second;
    };

    if (auto v = get("cell_width")) guard([&] { cfg.cell_width = number(*v, "cell_width"); });
    if (auto v = get("p0")) guard([&] { cfg.p0 = number(*v, "p0"); });
    if (auto v = get("max_dist")) guard([&] { cfg.dist_max = number(*v, "max_dist"); });
    if (auto v = get("service_hours")) {
        guard([&] {
            const auto [a, b] = parse_service_hours(*v);
            cfg.periods.window_start = a;
            cfg.periods.window_end = b;
            cfg.periods.count = static_cast<std::int32_t>((b - a) % 3600 == 0 ? (b - a) / 3600 : 1);
        });
    }
    if (auto v = get("periods")) {
        guard([&] {
            cfg.periods.count = parse_period_count(*v, cfg.periods.window_start, cfg.periods.window_end);
        });
    }
    if (auto v = get("init")) guard([&] { parse_init(*v, cfg.em); });
    if (auto v = get("tol")) guard([&] { cfg.em.tol = number(*v, "tol"); });
    if (auto v = get("max_iters")) {
        guard([&] {
            const auto n = integer(*v, "max_iters");
            if (n < 1 || n > 1000000) throw ValidationError("max_iters", "must be between 1 and 1000000");
            cfg.em.max_iters = static_cast<std::int32_t>(n);
        });
    }
    if (auto v = get("alpha_floor")) guard([&] { cfg.em.alpha_floor = number(*v, "alpha_floor"); });
    if (auto v = get("rebalance")) {
        guard([&] {
            const auto mode = parse_rebalance_mode(trim(*v));
            if (!mode) throw ValidationError("rebalance", "expected auto, perfect or derive");
            cfg.rebalance = *mode;
        });
    }
    if (auto v = get("seed")) {
        guard([&] {
            std::uint64_t s = 0;
            if (!read_number(*v, s)) throw ValidationError("seed", "expected a non-negative integer");
            cfg.seed = s;
        });
    }
    if (auto v = get("utc_offset")) guard([&] { cfg.schema.utc_offset_minutes = parse_utc_offset_text(*v); });
    if (auto v = get("day_start")) {
        guard([&] {
            const auto t = parse_clock(trim(*v));
            if (!t || *t >= kSecondsPerDay) throw ValidationError("day_start", "expected HH:MM");
            cfg.day_start_offset = *t;
        });
    }
    if (auto v = get("threads")) {
        guard([&] {
            const auto n = integer(*v, "threads");
            if (n < 1 || n > 256) throw ValidationError("threads", "must be between 1 and 256");
            cfg.em.threads = static_cast<std::int32_t>(n);
        });
    }
    if (auto v = get("delimiter")) {
        guard([&] {
            if (*v == "\\t" || *v == "tab") {
                cfg.schema.delimiter = '\t';
            } else if (v->size() == 1) {
                cfg.schema.delimiter = (*v)[0];
            } else {
                throw ValidationError("delimiter", "expected a single character");
            }
        });
    }
    for (FieldError& e : cfg.validation_errors()) {
        const bool seen = std::any_of(errs.begin(), errs.end(), [&](const FieldError& x) { return x.field == e.field; });
        if (!seen) errs.push_back(std::move(e));
    }
    if (!errs.empty()) throw ValidationError(std::move(errs));
    return cfg;
}

} // namespace mmdemand

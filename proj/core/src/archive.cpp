#include "mmdemand/archive.hpp"

#include <charconv>
#include <cstdio>

#include "json.hpp"
#include "mmdemand/error.hpp"

namespace mmdemand {

using nlohmann::json;

std::string_view to_string(ServiceLevel s) noexcept {
    switch (s) {
        case ServiceLevel::ok: return "ok";
        case ServiceLevel::low_service: return "low_service";
        case ServiceLevel::insufficient_data: return "insufficient_data";
    }
    return "insufficient_data";
}

std::optional<ServiceLevel> parse_service_level(std::string_view s) noexcept {
    if (s == "ok") return ServiceLevel::ok;
    if (s == "low_service") return ServiceLevel::low_service;
    if (s == "insufficient_data") return ServiceLevel::insufficient_data;
    return std::nullopt;
}

ServiceLevel classify_service(std::optional<double> demand, double trip_rate, double alpha, double alpha_floor) {
    if (!demand || alpha < alpha_floor || alpha <= 0.0) return ServiceLevel::insufficient_data;
    if (*demand > 0.0 && *demand >= 2.0 * trip_rate) return ServiceLevel::low_service;
    return ServiceLevel::ok;
}

const std::vector<std::string>& ResultArchive::columns() {
    static const std::vector<std::string> cols = {"period",  "cell",     "row",   "col",       "center_lat", "center_lon",
                                                  "mu_em",   "mu_naive", "alpha", "trip_rate", "avail_frac", "category"};
    return cols;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string clock_text(Seconds s) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%02d:%02d", static_cast<int>(s / 3600), static_cast<int>(s / 60 % 60));
    return buf;
}

template <class T>
T require(const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(std::string("archive: missing field '") + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("archive: bad field '") + key + "': " + e.what());
    }
}

std::optional<double> optional_from(const json& v) {
    if (v.is_null()) return std::nullopt;
    if (!v.is_number()) throw ParseError("archive: expected a number or null");
    return v.get<double>();
}

} // namespace

std::string ResultArchive::to_json() const {
    json doc;
    doc["format"] = kFormat;
    doc["version"] = kVersion;
    doc["manifest"] = json::parse(manifest_json);
    doc["grid"] = {{"origin_lat", grid.origin_lat},
                   {"origin_lon", grid.origin_lon},
                   {"cell_width", grid.cell_width},
                   {"rows", grid.rows},
                   {"cols", grid.cols},
                   {"meters_per_deg_lat", grid.meters_per_deg_lat},
                   {"meters_per_deg_lon", grid.meters_per_deg_lon}};
    doc["periods"] = {{"window_start", clock_text(periods.window_start)},
                      {"window_end", clock_text(periods.window_end)},
                      {"count", periods.count},
                      {"length_seconds", periods.length()}};
    doc["alpha_floor"] = alpha_floor;
    doc["columns"] = columns();
    json rows_json = json::array();
    for (const ArchiveRow& r : rows) {
        rows_json.push_back(json::array({r.period, r.cell, r.row, r.col, r.center_lat, r.center_lon,
                                         optional_number(r.mu_em), optional_number(r.mu_naive), r.alpha, r.trip_rate,
                                         r.avail_frac, to_string(r.category)}));
    }
    doc["rows"] = std::move(rows_json);
    return doc.dump();
}

ResultArchive ResultArchive::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("archive is not valid JSON: ") + e.what());
    }
    if (require<std::string>(doc, "format") != kFormat) throw ParseError("archive: unknown format");
    if (require<int>(doc, "version") != kVersion) throw ParseError("archive: unsupported version");

    ResultArchive a;
    if (!doc.contains("manifest") || !doc["manifest"].is_object()) throw ParseError("archive: missing manifest");
    a.manifest_json = doc["manifest"].dump();

    const json& g = doc.contains("grid") ? doc["grid"] : json();
    a.grid.origin_lat = require<double>(g, "origin_lat");
    a.grid.origin_lon = require<double>(g, "origin_lon");
    a.grid.cell_width = require<double>(g, "cell_width");
    a.grid.rows = require<std::int32_t>(g, "rows");
    a.grid.cols = require<std::int32_t>(g, "cols");
    a.grid.meters_per_deg_lat = require<double>(g, "meters_per_deg_lat");
    a.grid.meters_per_deg_lon = require<double>(g, "meters_per_deg_lon");
    if (a.grid.rows < 1 || a.grid.cols < 1 || !(a.grid.cell_width > 0.0)) throw ParseError("archive: bad grid");

    const json& p = doc.contains("periods") ? doc["periods"] : json();
    const auto ws = parse_clock(require<std::string>(p, "window_start"));
    const auto we = parse_clock(require<std::string>(p, "window_end"));
    if (!ws || !we) throw ParseError("archive: bad service window");
    a.periods.window_start = *ws;
    a.periods.window_end = *we;
    a.periods.count = require<std::int32_t>(p, "count");
    try {
        a.periods.validate();
    } catch (const ValidationError& e) {
        throw ParseError(std::string("archive: ") + e.what());
    }
    a.alpha_floor = require<double>(doc, "alpha_floor");

    if (require<std::vector<std::string>>(doc, "columns") != columns()) throw ParseError("archive: unexpected columns");
    if (!doc.contains("rows") || !doc["rows"].is_array()) throw ParseError("archive: missing rows");
    const std::size_t expected = static_cast<std::size_t>(a.periods.count) * static_cast<std::size_t>(a.grid.cell_count());
    if (doc["rows"].size() != expected) {
        throw ParseError("archive: expected " + std::to_string(expected) + " rows, found " +
                         std::to_string(doc["rows"].size()));
    }
    a.rows.reserve(expected);
    for (const json& r : doc["rows"]) {
        if (!r.is_array() || r.size() != columns().size()) throw ParseError("archive: malformed row");
        try {
            ArchiveRow row;
            row.period = r[0].get<std::int32_t>();
            row.cell = r[1].get<std::int32_t>();
            row.row = r[2].get<std::int32_t>();
            row.col = r[3].get<std::int32_t>();
            row.center_lat = r[4].get<double>();
            row.center_lon = r[5].get<double>();
            row.mu_em = optional_from(r[6]);
            row.mu_naive = optional_from(r[7]);
            row.alpha = r[8].get<double>();
            row.trip_rate = r[9].get<double>();
            row.avail_frac = r[10].get<double>();
            const auto level = parse_service_level(r[11].get<std::string>());
            if (!level) throw ParseError("archive: unknown category");
            row.category = *level;
            if (row.period < 0 || row.period >= a.periods.count || row.cell < 0 || row.cell >= a.grid.cell_count()) {
                throw ParseError("archive: row outside the grid or period range");
            }
            a.rows.push_back(row);
        } catch (const json::exception& e) {
            throw ParseError(std::string("archive: malformed row: ") + e.what());
        }
    }
    return a;
}

void ResultArchive::write_csv(std::ostream& out) const {
    const auto& cols = columns();
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
    out << '\n';
    char buf[64];
    const auto num = [&](double v) -> std::string_view {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return {buf, static_cast<std::size_t>(ptr - buf)};
    };
    for (const ArchiveRow& r : rows) {
        out << r.period << ',' << r.cell << ',' << r.row << ',' << r.col << ',' << num(r.center_lat) << ','
            << num(r.center_lon) << ',';
        if (r.mu_em) out << num(*r.mu_em);
        out << ',';
        if (r.mu_naive) out << num(*r.mu_naive);
        out << ',' << num(r.alpha) << ',' << num(r.trip_rate) << ',' << num(r.avail_frac) << ',' << to_string(r.category)
            << '\n';
    }
}

PeriodWindow PeriodWindow::parse(std::string_view text, std::int32_t period_count) {
    const auto bad = [&] {
        return ValidationError("period", "expected 'all', a period index or 'a-b' within [0, " +
                                               std::to_string(period_count - 1) + "]");
    };
    if (text.empty() || text == "all") return {0, period_count - 1, WindowKind::all};
    const auto read = [&](std::string_view s) {
        std::int32_t v = -1;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0 || v >= period_count) throw bad();
        return v;
    };
    const auto dash = text.find('-');
    if (dash == std::string_view::npos) {
        const std::int32_t h = read(text);
        return {h, h, WindowKind::single};
    }
    const std::int32_t a = read(text.substr(0, dash));
    const std::int32_t b = read(text.substr(dash + 1));
    if (b < a) throw bad();
    return {a, b, a == b ? WindowKind::single : WindowKind::range};
}

LayerSet compute_layers(const ResultArchive& archive, const PeriodWindow& window) {
    const std::int32_t m = archive.grid.cell_count();
    struct Acc {
        double demand = 0.0;
        std::int32_t demand_n = 0;
        double avail = 0.0, trips = 0.0, alpha = 0.0;
    };
    std::vector<Acc> acc(static_cast<std::size_t>(m));
    for (const ArchiveRow& r : archive.rows) {
        if (r.period < window.first || r.period > window.last) continue;
        Acc& a = acc[static_cast<std::size_t>(r.cell)];
        if (r.mu_em) {
            a.demand += *r.mu_em;
            ++a.demand_n;
        }
        a.avail += r.avail_frac;
        a.trips += r.trip_rate;
        a.alpha += r.alpha;
    }
    const double n = static_cast<double>(window.last - window.first + 1);
    LayerSet out;
    out.window = window;
    out.cells.reserve(static_cast<std::size_t>(m));
    for (std::int32_t i = 0; i < m; ++i) {
        const Acc& a = acc[static_cast<std::size_t>(i)];
        LayerCell c;
        c.cell = i;
        c.row = i / archive.grid.cols;
        c.col = i % archive.grid.cols;
        if (a.demand_n > 0) c.demand = a.demand / a.demand_n;
        c.availability = a.avail / n;
        c.trip_rate = a.trips / n;
        c.alpha = a.alpha / n;
        c.category = classify_service(c.demand, c.trip_rate, c.alpha, archive.alpha_floor);
        out.cells.push_back(c);
    }
    return out;
}

std::string layers_to_json(const ResultArchive& archive, const LayerSet& layers) {
    json doc;
    doc["window"] = {{"first", layers.window.first},
                     {"last", layers.window.last},
                     {"kind", layers.window.kind == WindowKind::all     ? "all"
                              : layers.window.kind == WindowKind::range ? "range"
                                                                        : "single"}};
    doc["grid"] = {{"origin_lat", archive.grid.origin_lat}, {"origin_lon", archive.grid.origin_lon},
                   {"cell_width", archive.grid.cell_width}, {"rows", archive.grid.rows},
                   {"cols", archive.grid.cols},             {"meters_per_deg_lat", archive.grid.meters_per_deg_lat},
                   {"meters_per_deg_lon", archive.grid.meters_per_deg_lon}};
    doc["category_rule"] = "window-mean values; low_service when demand > 0 and demand >= 2 x trip rate";
    json demand = json::array(), avail = json::array(), trips = json::array(), level = json::array();
    for (const LayerCell& c : layers.cells) {
        demand.push_back(optional_number(c.demand));
        avail.push_back(c.availability);
        trips.push_back(c.trip_rate);
        level.push_back(to_string(c.category));
    }
    doc["layers"] = {{"demand", demand}, {"availability", avail}, {"trips", trips}, {"service_level", level}};
    return doc.dump();
}

} // namespace mmdemand

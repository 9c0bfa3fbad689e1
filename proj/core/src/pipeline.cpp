#include "mmdemand/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mmdemand {

using nlohmann::json;

std::string_view to_string(RebalanceMode m) noexcept {
    switch (m) {
        case RebalanceMode::automatic: return "auto";
        case RebalanceMode::perfect: return "perfect";
        case RebalanceMode::derive: return "derive";
    }
    return "auto";
}

std::optional<RebalanceMode> parse_rebalance_mode(std::string_view s) noexcept {
    if (s == "auto") return RebalanceMode::automatic;
    if (s == "perfect") return RebalanceMode::perfect;
    if (s == "derive") return RebalanceMode::derive;
    return std::nullopt;
}

std::string_view to_string(InitMode m) noexcept {
    switch (m) {
        case InitMode::uniform: return "uniform";
        case InitMode::trips: return "trips";
        case InitMode::gamma_blend: return "gamma_blend";
    }
    return "uniform";
}

namespace {

std::string clock_text(Seconds s) {
    std::ostringstream out;
    out << (s / 3600 < 10 ? "0" : "") << s / 3600 << ':' << (s / 60 % 60 < 10 ? "0" : "") << s / 60 % 60;
    return out.str();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json report_json(const IngestReport& r) {
    json j = {{"rows_read", r.rows_read},
              {"rows_kept", r.rows_kept},
              {"rows_dropped", r.dropped_total()},
              {"dropped", r.dropped},
              {"messages", r.messages},
              {"days", r.days},
              {"rebalance_moves", r.rebalance_moves},
              {"seeded_vehicles", r.seeded_vehicles}};
    j["first_start"] = r.first_start ? json(format_timestamp(*r.first_start)) : json(nullptr);
    j["last_start"] = r.last_start ? json(format_timestamp(*r.last_start)) : json(nullptr);
    if (r.bounding_box) {
        j["bounding_box"] = {{"lat_min", r.bounding_box->lat_min},
                             {"lat_max", r.bounding_box->lat_max},
                             {"lon_min", r.bounding_box->lon_min},
                             {"lon_max", r.bounding_box->lon_max}};
    } else {
        j["bounding_box"] = nullptr;
    }
    return j;
}

bool all_have_vehicles(const std::vector<RawTrip>& trips) {
    for (const RawTrip& t : trips) {
        if (!t.vehicle_id || t.vehicle_id->empty()) return false;
    }
    return !trips.empty();
}

} // namespace

std::vector<FieldError> EstimateConfig::validation_errors() const {
    std::vector<FieldError> errs;
    if (!(cell_width > 0.0) || !std::isfinite(cell_width)) errs.push_back({"cell_width", "must be a positive number of meters"});
    if (!(dist_max >= 0.0) || !std::isfinite(dist_max)) errs.push_back({"dist_max", "must be a non-negative number of meters"});
    if (!(p0 > 0.0 && p0 <= 1.0)) errs.push_back({"p0", "must lie in (0, 1]"});
    try {
        periods.validate();
    } catch (const ValidationError& e) {
        errs.insert(errs.end(), e.errors().begin(), e.errors().end());
    }
    try {
        em.validate();
    } catch (const ValidationError& e) {
        errs.insert(errs.end(), e.errors().begin(), e.errors().end());
    }
    if (day_start_offset < 0 || day_start_offset >= kSecondsPerDay) {
        errs.push_back({"day_start", "must be a time of day"});
    }
    if (grid && (grid->rows < 1 || grid->cols < 1)) errs.push_back({"grid", "rows and cols must be positive"});

    const bool shape_ok = errs.empty() || std::none_of(errs.begin(), errs.end(), [](const FieldError& e) {
        return e.field == "cell_width" || e.field == "dist_max" || e.field == "p0";
    });
    if (shape_ok && p0 < 1.0) {
        const DistanceClassTable classes(GridSpec::fixed({0.0, 0.0}, cell_width, 1, 1), dist_max);
        try {
            make_threshold_distribution(p0, classes);
        } catch (const InfeasibleParameterError& e) {
            std::ostringstream msg;
            msg << "not achievable with cell width " << cell_width << " m and max distance " << dist_max
                << " m; choose a value in (" << e.achievable_low() << ", " << e.achievable_high() << "]";
            errs.push_back({"p0", msg.str()});
        }
    }
    return errs;
}

void EstimateConfig::validate() const {
    auto errs = validation_errors();
    if (!errs.empty()) throw ValidationError(std::move(errs));
}

std::string EstimateConfig::to_json() const {
    json j = {{"cell_width", cell_width},
              {"p0", p0},
              {"dist_max", dist_max},
              {"service_hours", clock_text(periods.window_start) + "-" + clock_text(periods.window_end)},
              {"periods", periods.count},
              {"init", to_string(em.init_mode)},
              {"gamma", em.gamma},
              {"tol", em.tol},
              {"max_iters", em.max_iters},
              {"alpha_floor", em.alpha_floor},
              {"rebalance", to_string(rebalance)},
              {"day_start", clock_text(day_start_offset)},
              {"seed", seed},
              {"padding", padding},
              {"utc_offset_minutes", schema.utc_offset_minutes},
              {"delimiter", std::string(1, schema.delimiter)},
              {"columns", schema.columns}};
    if (grid) {
        j["grid"] = {{"origin_lat", grid->origin.lat},
                     {"origin_lon", grid->origin.lon},
                     {"rows", grid->rows},
                     {"cols", grid->cols}};
    } else {
        j["grid"] = nullptr;
    }
    return j.dump();
}

std::string ingest_report_json(const IngestReport& report) { return report_json(report).dump(); }

EstimateConfig EstimateConfig::from_json(std::string_view text) {
    EstimateConfig cfg;
    try {
        const json j = json::parse(text);
        cfg.cell_width = j.at("cell_width").get<double>();
        cfg.p0 = j.at("p0").get<double>();
        cfg.dist_max = j.at("dist_max").get<double>();
        const auto hours = j.at("service_hours").get<std::string>();
        const auto dash = hours.find('-');
        const auto a = parse_clock(std::string_view(hours).substr(0, dash));
        const auto b = dash == std::string::npos ? std::nullopt : parse_clock(std::string_view(hours).substr(dash + 1));
        if (!a || !b) throw ParseError("bad service_hours");
        cfg.periods = PeriodScheme{*a, *b, j.at("periods").get<std::int32_t>()};
        const auto init = j.at("init").get<std::string>();
        cfg.em.init_mode = init == "trips" ? InitMode::trips : init == "gamma_blend" ? InitMode::gamma_blend : InitMode::uniform;
        cfg.em.gamma = j.at("gamma").get<double>();
        cfg.em.tol = j.at("tol").get<double>();
        cfg.em.max_iters = j.at("max_iters").get<std::int32_t>();
        cfg.em.alpha_floor = j.at("alpha_floor").get<double>();
        const auto mode = parse_rebalance_mode(j.at("rebalance").get<std::string>());
        if (!mode) throw ParseError("bad rebalance mode");
        cfg.rebalance = *mode;
        const auto day_start = parse_clock(j.at("day_start").get<std::string>());
        if (!day_start) throw ParseError("bad day_start");
        cfg.day_start_offset = *day_start;
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.padding = j.at("padding").get<double>();
        cfg.schema.utc_offset_minutes = j.at("utc_offset_minutes").get<int>();
        const auto delim = j.at("delimiter").get<std::string>();
        if (delim.size() != 1) throw ParseError("bad delimiter");
        cfg.schema.delimiter = delim[0];
        cfg.schema.columns = j.at("columns").get<std::map<std::string, std::string>>();
        if (!j.at("grid").is_null()) {
            const json& g = j.at("grid");
            cfg.grid = FixedGrid{{g.at("origin_lat").get<double>(), g.at("origin_lon").get<double>()},
                                 g.at("rows").get<std::int32_t>(),
                                 g.at("cols").get<std::int32_t>()};
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad configuration document: ") + e.what());
    }
    return cfg;
}

PreparedInput prepare_input(std::istream& trips_csv, const EstimateConfig& cfg) {
    cfg.validate();
    ParsedTrips parsed = parse_trips(trips_csv, cfg.schema);
    PreparedInput in;
    in.report = std::move(parsed.report);

    if (cfg.grid) {
        in.grid = GridSpec::fixed(cfg.grid->origin, cfg.cell_width, cfg.grid->rows, cfg.grid->cols);
    } else {
        if (parsed.trips.empty()) throw ParseError("no usable trips in the input; cannot derive a grid");
        std::vector<LatLon> points;
        points.reserve(parsed.trips.size() * 2);
        for (const RawTrip& t : parsed.trips) {
            points.push_back(t.start);
            points.push_back(t.end);
        }
        in.grid = build_grid(points, cfg.cell_width, cfg.padding < 0.0 ? cfg.cell_width : cfg.padding);
    }
    const std::vector<LocatedTrip> located = locate_trips(parsed.trips, in.grid, in.report);

    in.rebalance_used = cfg.rebalance;
    if (in.rebalance_used == RebalanceMode::automatic) {
        in.rebalance_used = all_have_vehicles(parsed.trips) ? RebalanceMode::derive : RebalanceMode::perfect;
    }
    std::vector<AvailabilityEvent> events = in.rebalance_used == RebalanceMode::derive
                                                ? derive_availability(located, &in.report, cfg.day_start_offset)
                                                : perfect_rebalance(located, &in.report, cfg.day_start_offset);
    in.horizon = covering_horizon(located, events);
    events = clip_to_horizon(std::move(events), in.horizon);
    in.report.days = in.horizon.days;
    in.timeline = AvailabilityTimeline(std::move(events), in.grid, in.horizon.start, in.horizon.days, cfg.periods);
    in.trips = bin_trips(located, cfg.periods, &in.report);
    return in;
}

ModelInputs build_model_inputs(const AvailabilityTimeline& timeline, std::span<const TripEvent> trips, double p0,
                               double dist_max) {
    ModelInputs mi;
    mi.classes = DistanceClassTable(timeline.grid(), dist_max);
    mi.distribution = make_threshold_distribution(p0, mi.classes);
    mi.profile = nearest_profile(timeline, mi.classes);
    mi.alpha = compute_alpha(mi.profile, mi.distribution);
    mi.pi = compute_pi_table(trips, timeline, mi.classes, mi.distribution);
    return mi;
}

EstimateResult estimate(std::istream& trips_csv, const EstimateConfig& cfg, const std::string& input_sha256,
                        const ProgressFn& progress) {
    const auto report_stage = [&](const char* s, std::int32_t it) {
        if (progress) progress(s, it);
    };

    report_stage(stage::ingest, 0);
    PreparedInput in = prepare_input(trips_csv, cfg);
    const GridSpec& grid = in.grid;
    const Horizon& horizon = in.horizon;
    const std::vector<TripEvent>& trips = in.trips;
    IngestReport& report = in.report;
    const RebalanceMode mode = in.rebalance_used;

    report_stage(stage::availability, 0);
    const DistanceClassTable classes(grid, cfg.dist_max);
    const ThresholdDistribution dist = make_threshold_distribution(cfg.p0, classes);
    const NearestBikeProfile profile = nearest_profile(in.timeline, classes);
    const AlphaMatrix alpha = compute_alpha(profile, dist);

    report_stage(stage::choice, 0);
    const PiTable pi = compute_pi_table(trips, in.timeline, classes, dist);

    report_stage(stage::em, 0);
    EMResult em = run_em(trips, pi, alpha, horizon.days, cfg.em,
                         [&](std::int32_t it, const RateMatrix&, double) { report_stage(stage::em, it); });
    const RateMatrix naive = naive_estimate(trips, profile, horizon.days, cfg.em.alpha_floor);
    const RateMatrix observed = observed_trip_rate(trips, cfg.periods.count, grid.cell_count(), horizon.days);

    report_stage(stage::archive, 0);
    EstimateResult out;
    out.days = horizon.days;
    out.trips_used = trips.size();
    out.estimable_entries = em.rates.estimable_count();

    ResultArchive& a = out.archive;
    a.grid = grid;
    a.periods = cfg.periods;
    a.alpha_floor = cfg.em.alpha_floor;
    const std::int32_t m = grid.cell_count();
    a.rows.reserve(static_cast<std::size_t>(cfg.periods.count) * static_cast<std::size_t>(m));
    for (std::int32_t h = 0; h < cfg.periods.count; ++h) {
        for (std::int32_t c = 0; c < m; ++c) {
            const CellIndex i{c};
            ArchiveRow row;
            row.period = h;
            row.cell = c;
            const RowCol rc = grid.row_col(i);
            row.row = rc.row;
            row.col = rc.col;
            const LatLon center = grid.center(i);
            row.center_lat = center.lat;
            row.center_lon = center.lon;
            if (em.rates.estimable(h, i)) row.mu_em = em.rates.rate(h, i);
            if (naive.estimable(h, i)) row.mu_naive = naive.rate(h, i);
            row.alpha = alpha.at(h, i);
            row.trip_rate = observed.rate(h, i);
            row.avail_frac = profile.in_cell_fraction(h, i);
            row.category = classify_service(row.mu_em, row.trip_rate, row.alpha, cfg.em.alpha_floor);
            a.rows.push_back(row);
        }
    }

    json trace = json::array();
    for (double v : em.diagnostics.log_likelihood_trace) trace.push_back(finite_or_null(v));
    json manifest = {
        {"source", "estimate"},
        {"reupload", false},
        {"config", json::parse(cfg.to_json())},
        {"rebalance_used", to_string(mode)},
        {"input_sha256", input_sha256},
        {"horizon", {{"start", format_timestamp(horizon.start)}, {"days", horizon.days}}},
        {"ingest", report_json(report)},
        {"trips_used", trips.size()},
        {"distribution",
         {{"family", dist.sigma() > 0.0 ? "half_normal" : "own_cell_only"},
          {"p0", cfg.p0},
          {"sigma", dist.sigma()},
          {"dist_max", cfg.dist_max},
          {"classes", classes.classes()},
          {"boundaries", dist.boundaries()},
          {"class_probs", dist.class_probs()},
          {"survival", dist.survival()}}},
        {"em",
         {{"iterations", em.diagnostics.iterations},
          {"converged", em.diagnostics.converged},
          {"log_likelihood_trace", trace},
          {"fallback_trips", em.diagnostics.fallback_trips},
          {"unassignable_trips", em.diagnostics.unassignable_trips},
          {"warnings", em.diagnostics.warnings},
          {"estimable_entries", out.estimable_entries}}},
        {"layer_window_rule", "multi-period layers average each value over the window, then classify"},
    };
    a.manifest_json = manifest.dump();

    out.report = std::move(report);
    out.diagnostics = std::move(em.diagnostics);
    out.distribution = dist;
    return out;
}

EstimateResult estimate_file(const std::filesystem::path& trips_csv, const EstimateConfig& cfg,
                             const ProgressFn& progress) {
    const std::string hash = sha256_file(trips_csv);
    std::ifstream in(trips_csv, std::ios::binary);
    if (!in) throw ParseError("cannot open trip file " + trips_csv.string());
    return estimate(in, cfg, hash, progress);
}

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
            EVP_MD_CTX_free(ctx_);
            throw Error("SHA-256 unavailable");
        }
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md.data(), &len);
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        out.reserve(len * 2);
        for (unsigned int k = 0; k < len; ++k) {
            out.push_back(digits[md[k] >> 4]);
            out.push_back(digits[md[k] & 0xF]);
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

} // namespace

std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

} // namespace mmdemand

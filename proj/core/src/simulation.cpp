#include "mmdemand/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "mmdemand/error.hpp"

namespace mmdemand {

std::string_view to_string(CellKind k) noexcept {
    switch (k) {
        case CellKind::cluster_center: return "cluster_center";
        case CellKind::border: return "border";
        case CellKind::isolated: return "isolated";
        case CellKind::none: return "none";
    }
    return "none";
}

double true_rate(CellKind k) noexcept {
    switch (k) {
        case CellKind::cluster_center: return 10.0;
        case CellKind::border: return 5.0;
        case CellKind::isolated: return 2.0;
        case CellKind::none: return 0.0;
    }
    return 0.0;
}

std::string_view to_string(Algorithm a) noexcept {
    switch (a) {
        case Algorithm::em: return "EM";
        case Algorithm::naive: return "Naive";
        case Algorithm::realized: return "Realized";
    }
    return "EM";
}

std::string_view to_string(Category c) noexcept {
    switch (c) {
        case Category::all: return "All";
        case Category::cluster_center: return "Cluster Center";
        case Category::border: return "Border";
        case Category::isolated: return "Isolated";
        case Category::none: return "No Demand";
    }
    return "All";
}

std::string Layout::render() const {
    std::string out;
    for (std::int32_t r = grid.rows - 1; r >= 0; --r) {
        for (std::int32_t c = 0; c < grid.cols; ++c) {
            switch (kind(grid.index({r, c}))) {
                case CellKind::cluster_center: out.push_back('C'); break;
                case CellKind::border: out.push_back('b'); break;
                case CellKind::isolated: out.push_back('i'); break;
                case CellKind::none: out.push_back('.'); break;
            }
        }
        out.push_back('\n');
    }
    return out;
}

Layout layout_grid(double cell_width) {
    constexpr std::int32_t n = 12;
    Layout layout;
    layout.grid = GridSpec::fixed({41.80, -71.45}, cell_width, n, n);
    layout.kinds.assign(static_cast<std::size_t>(n * n), CellKind::none);
    const RowCol centers[] = {{2, 2}, {3, 9}, {8, 4}};
    const RowCol isolated[] = {{0, 6}, {6, 0}, {6, 9}, {10, 10}, {11, 0}};
    for (const RowCol c : centers) {
        for (std::int32_t dr = -1; dr <= 1; ++dr) {
            for (std::int32_t dc = -1; dc <= 1; ++dc) {
                layout.kinds[static_cast<std::size_t>(layout.grid.index({c.row + dr, c.col + dc}).value)] =
                    CellKind::border;
            }
        }
    }
    for (const RowCol c : centers) {
        layout.kinds[static_cast<std::size_t>(layout.grid.index(c).value)] = CellKind::cluster_center;
    }
    for (const RowCol c : isolated) {
        layout.kinds[static_cast<std::size_t>(layout.grid.index(c).value)] = CellKind::isolated;
    }
    return layout;
}

PeriodScheme experiment_periods() { return PeriodScheme{0, 3600, 1}; }

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return std::mt19937_64(seq);
}

constexpr std::uint64_t kStockSalt = 0x57'0C'4B;
constexpr std::uint64_t kArrivalSalt = 0xA2'21'7A;

} // namespace

SimulatedData simulate_days(const Layout& layout, double p, const ThresholdDistribution& dist,
                            const DistanceClassTable& classes, std::uint64_t seed, const SimulationOptions& opts) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("simulate_days: p must lie in [0, 1]");
    if (opts.days < 1 || opts.stock < 1) throw std::invalid_argument("simulate_days: days and stock must be >= 1");
    if (!dist.matches(classes)) throw std::invalid_argument("simulate_days: class-table mismatch");

    const GridSpec& grid = layout.grid;
    const std::int32_t m = grid.cell_count();
    const Seconds service = experiment_periods().window_end;
    std::mt19937_64 stock_rng = stream(seed, kStockSalt);
    std::mt19937_64 arrival_rng = stream(seed, kArrivalSalt);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<Seconds> when(0, service - 1);

    SimulatedData out;
    out.realized_rate.assign(static_cast<std::size_t>(m), 0.0);
    std::vector<AvailabilityEvent> events;
    std::vector<std::uint8_t> stocked(static_cast<std::size_t>(m));
    std::vector<std::size_t> nearest(static_cast<std::size_t>(m));
    std::vector<CellIndex> candidates;

    for (std::int32_t d = 0; d < opts.days; ++d) {
        const Seconds day = static_cast<Seconds>(d) * kSecondsPerDay;
        for (std::int32_t i = 0; i < m; ++i) {
            const double u = u01(stock_rng);
            const bool on = layout.kind({i}) == CellKind::cluster_center || u < p;
            stocked[static_cast<std::size_t>(i)] = on ? 1 : 0;
            if (on) {
                events.push_back({day, {i}, opts.stock, EventSource::rebalance_add});
                events.push_back({day + service, {i}, -opts.stock, EventSource::rebalance_remove});
            }
        }
        for (std::int32_t i = 0; i < m; ++i) {
            std::size_t c = classes.class_count();
            for (std::size_t l = 0; l < classes.class_count() && c == classes.class_count(); ++l) {
                classes.for_each_neighbor(grid, {i}, l, [&](CellIndex n) {
                    if (stocked[static_cast<std::size_t>(n.value)]) c = l;
                });
            }
            nearest[static_cast<std::size_t>(i)] = c;
        }
        for (std::int32_t i = 0; i < m; ++i) {
            const double rate = layout.rate({i});
            if (rate <= 0.0) continue;
            std::poisson_distribution<std::int32_t> poisson(rate);
            const std::int32_t n = poisson(arrival_rng);
            out.realized_rate[static_cast<std::size_t>(i)] += n;
            out.arrivals += static_cast<std::size_t>(n);
            for (std::int32_t a = 0; a < n; ++a) {
                // every draw is taken whatever the outcome so arrivals line up across p
                const Seconds t = day + when(arrival_rng);
                const std::size_t threshold = dist.sample(arrival_rng);
                const double pick = u01(arrival_rng);
                const std::size_t c = nearest[static_cast<std::size_t>(i)];
                if (c == classes.class_count() || c > threshold) continue;
                candidates.clear();
                classes.for_each_neighbor(grid, {i}, c, [&](CellIndex k) {
                    if (stocked[static_cast<std::size_t>(k.value)]) candidates.push_back(k);
                });
                // equal stock everywhere, so a uniform vehicle is a uniform stocked cell
                const auto idx = std::min(candidates.size() - 1,
                                          static_cast<std::size_t>(pick * static_cast<double>(candidates.size())));
                out.trips.push_back({t, 0, candidates[idx]});
            }
        }
    }
    for (double& r : out.realized_rate) r /= opts.days;
    std::sort(out.trips.begin(), out.trips.end(), [](const TripEvent& a, const TripEvent& b) {
        return a.time != b.time ? a.time < b.time : a.cell < b.cell;
    });
    out.timeline = AvailabilityTimeline(std::move(events), grid, 0, opts.days, experiment_periods());
    return out;
}

void ExperimentConfig::validate() const {
    std::vector<FieldError> errs;
    if (!(cell_width > 0.0)) errs.push_back({"cell_width", "must be positive"});
    if (days < 1) errs.push_back({"days", "must be >= 1"});
    if (replications < 1) errs.push_back({"reps", "must be >= 1"});
    if (p_values.empty()) errs.push_back({"p_list", "at least one availability probability required"});
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) errs.push_back({"p_list", "values must lie in [0, 1]"});
    }
    if (!(p0 > 0.0 && p0 <= 1.0)) errs.push_back({"p0", "must lie in (0, 1]"});
    if (!(dist_max >= 0.0)) errs.push_back({"dist_max", "must be >= 0"});
    if (stock < 1) errs.push_back({"stock", "must be >= 1"});
    if (threads < 1) errs.push_back({"threads", "must be >= 1"});
    if (!errs.empty()) throw ValidationError(std::move(errs));
    em.validate();
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

bool in_category(CellKind k, Category c) {
    switch (c) {
        case Category::all: return true;
        case Category::cluster_center: return k == CellKind::cluster_center;
        case Category::border: return k == CellKind::border;
        case Category::isolated: return k == CellKind::isolated;
        case Category::none: return k == CellKind::none;
    }
    return false;
}

constexpr Category kCategories[] = {Category::all, Category::cluster_center, Category::border, Category::isolated,
                                    Category::none};
constexpr Algorithm kAlgorithms[] = {Algorithm::em, Algorithm::naive, Algorithm::realized};

const std::vector<double>& errors_of(const ReplicationErrors& r, Algorithm a) {
    return a == Algorithm::em ? r.em : a == Algorithm::naive ? r.naive : r.realized;
}

std::uint64_t replication_seed(std::uint64_t base, std::int32_t rep) {
    return base * 1000003ULL + static_cast<std::uint64_t>(rep) * 7919ULL + 1ULL;
}

ReplicationErrors run_replication(const ExperimentConfig& cfg, const Layout& layout, const DistanceClassTable& classes,
                                  const ThresholdDistribution& dist, double p, std::int32_t rep) {
    SimulationOptions opts;
    opts.days = cfg.days;
    opts.stock = cfg.stock;
    const SimulatedData sim = simulate_days(layout, p, dist, classes, replication_seed(cfg.seed, rep), opts);
    const NearestBikeProfile profile = nearest_profile(sim.timeline, classes);
    const AlphaMatrix alpha = compute_alpha(profile, dist);
    const PiTable pi = compute_pi_table(sim.trips, sim.timeline, classes, dist);
    EMConfig em_cfg = cfg.em;
    em_cfg.threads = 1;
    const EMResult em = run_em(sim.trips, pi, alpha, cfg.days, em_cfg);
    const RateMatrix naive = naive_estimate(sim.trips, profile, cfg.days, cfg.em.alpha_floor);

    ReplicationErrors r;
    r.p = p;
    r.replication = rep;
    r.em_iterations = em.diagnostics.iterations;
    const std::int32_t m = layout.grid.cell_count();
    for (std::int32_t i = 0; i < m; ++i) {
        const double truth = layout.rate({i});
        const double e = em.rates.estimable(0, {i}) ? em.rates.rate(0, {i}) : 0.0;
        const double nv = naive.estimable(0, {i}) ? naive.rate(0, {i}) : 0.0;
        r.em.push_back(std::abs(e - truth));
        r.naive.push_back(std::abs(nv - truth));
        r.realized.push_back(std::abs(sim.realized_rate[static_cast<std::size_t>(i)] - truth));
        r.em_naive_gap = std::max(r.em_naive_gap, std::abs(e - nv));
    }
    return r;
}

} // namespace

const ErrorCell& ExperimentReport::at(Algorithm a, Category c, double p) const {
    for (const ErrorCell& e : summary) {
        if (e.algorithm == a && e.category == c && std::abs(e.p - p) < 1e-12) return e;
    }
    throw std::out_of_range("experiment summary has no such entry");
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto started = std::chrono::steady_clock::now();
    ExperimentReport report;
    report.config = cfg;
    report.layout = layout_grid(cfg.cell_width);
    const DistanceClassTable classes(report.layout.grid, cfg.dist_max);
    const ThresholdDistribution dist = make_threshold_distribution(cfg.p0, classes);

    const std::size_t jobs = cfg.p_values.size() * static_cast<std::size_t>(cfg.replications);
    report.replications.resize(jobs);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t j = next++; j < jobs; j = next++) {
            const double p = cfg.p_values[j / static_cast<std::size_t>(cfg.replications)];
            const auto rep = static_cast<std::int32_t>(j % static_cast<std::size_t>(cfg.replications));
            report.replications[j] = run_replication(cfg, report.layout, classes, dist, p, rep);
        }
    };
    {
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), jobs);
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
        worker();
    }

    const std::int32_t m = report.layout.grid.cell_count();
    for (std::size_t pi = 0; pi < cfg.p_values.size(); ++pi) {
        const double p = cfg.p_values[pi];
        for (const Algorithm a : kAlgorithms) {
            for (const Category c : kCategories) {
                std::vector<double> pooled;
                for (std::int32_t rep = 0; rep < cfg.replications; ++rep) {
                    const auto& errs = errors_of(report.replications[pi * cfg.replications + rep], a);
                    for (std::int32_t i = 0; i < m; ++i) {
                        if (in_category(report.layout.kind({i}), c)) pooled.push_back(errs[static_cast<std::size_t>(i)]);
                    }
                }
                ErrorCell e;
                e.algorithm = a;
                e.category = c;
                e.p = p;
                if (!pooled.empty()) {
                    e.max = *std::max_element(pooled.begin(), pooled.end());
                    e.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size());
                    e.median = median_of(std::move(pooled));
                }
                report.summary.push_back(e);
            }
        }
    }
    report.trends = evaluate_trends(report);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

TrendChecks evaluate_trends(const ExperimentReport& report) {
    TrendChecks t;
    const ExperimentConfig& cfg = report.config;
    const std::int32_t m = report.layout.grid.cell_count();
    const std::int32_t needed = static_cast<std::int32_t>(std::ceil(0.7 * cfg.replications - 1e-9));

    std::vector<double> ps = cfg.p_values;
    std::sort(ps.begin(), ps.end());
    ps.erase(std::unique(ps.begin(), ps.end()), ps.end());

    for (std::size_t pi = 0; pi < cfg.p_values.size(); ++pi) {
        const double p = cfg.p_values[pi];
        const bool low = p > 1e-12 && p <= 0.5 + 1e-12;
        std::int32_t wins = 0;
        for (std::int32_t rep = 0; rep < cfg.replications; ++rep) {
            const ReplicationErrors& r = report.replications[pi * cfg.replications + rep];
            double em_max = 0.0, naive_max = 0.0;
            for (std::int32_t i = 0; i < m; ++i) {
                if (report.layout.kind({i}) != CellKind::border) continue;
                em_max = std::max(em_max, r.em[static_cast<std::size_t>(i)]);
                naive_max = std::max(naive_max, r.naive[static_cast<std::size_t>(i)]);
            }
            if (em_max < naive_max) ++wins;
            if (std::abs(p - 1.0) < 1e-12 && r.em_naive_gap > 1e-6) t.full_availability_agreement = false;
        }
        if (low) {
            t.border_wins.emplace_back(p, wins);
            if (wins < needed) t.border_dominance = false;
        }
        if (std::abs(p) < 1e-12) {
            const double naive_none = report.at(Algorithm::naive, Category::none, p).max;
            const double em_none = report.at(Algorithm::em, Category::none, p).max;
            t.zero_availability_pattern = naive_none == 0.0 && em_none > 0.0;
        }
    }
    for (std::size_t k = 1; k < ps.size(); ++k) {
        if (report.at(Algorithm::em, Category::all, ps[k]).mean > report.at(Algorithm::em, Category::all, ps[k - 1]).mean)
            t.em_non_increasing = false;
        if (report.at(Algorithm::naive, Category::all, ps[k]).mean >
            report.at(Algorithm::naive, Category::all, ps[k - 1]).mean)
            t.naive_non_increasing = false;
    }
    return t;
}

void ExperimentReport::print_table(std::ostream& out) const {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::fixed << std::setprecision(2);
    out << std::left << std::setw(16) << "Cell type" << std::setw(8) << "Stat" << std::setw(10) << "Algorithm";
    for (double p : config.p_values) out << std::right << std::setw(7) << p;
    out << '\n';
    for (const Category c : kCategories) {
        for (const char* stat : {"Median", "Max"}) {
            for (const Algorithm a : kAlgorithms) {
                out << std::left << std::setw(16) << to_string(c) << std::setw(8) << stat << std::setw(10)
                    << to_string(a);
                for (double p : config.p_values) {
                    const ErrorCell& e = at(a, c, p);
                    out << std::right << std::setw(7) << (stat[1] == 'e' ? e.median : e.max);
                }
                out << '\n';
            }
        }
    }
    out.flags(flags);
    out.precision(precision);
}

void ExperimentReport::write_csv(std::ostream& out) const {
    out << "algorithm,category,p,median,max,mean\n";
    out << std::setprecision(17);
    for (const ErrorCell& e : summary) {
        out << to_string(e.algorithm) << ',' << to_string(e.category) << ',' << e.p << ',' << e.median << ',' << e.max
            << ',' << e.mean << '\n';
    }
}

std::string ExperimentReport::to_json() const {
    using nlohmann::json;
    json doc;
    doc["config"] = {{"cell_width", config.cell_width}, {"days", config.days},
                     {"replications", config.replications}, {"p_values", config.p_values},
                     {"p0", config.p0},                 {"dist_max", config.dist_max},
                     {"seed", config.seed},             {"stock", config.stock}};
    doc["layout"] = layout.render();
    json rows = json::array();
    for (const ErrorCell& e : summary) {
        rows.push_back({{"algorithm", to_string(e.algorithm)},
                        {"category", to_string(e.category)},
                        {"p", e.p},
                        {"median", e.median},
                        {"max", e.max},
                        {"mean", e.mean}});
    }
    doc["summary"] = rows;
    json wins = json::array();
    for (const auto& [p, w] : trends.border_wins) wins.push_back({{"p", p}, {"em_wins", w}});
    doc["trends"] = {{"border_wins", wins},
                     {"border_dominance", trends.border_dominance},
                     {"em_non_increasing", trends.em_non_increasing},
                     {"naive_non_increasing", trends.naive_non_increasing},
                     {"zero_availability_pattern", trends.zero_availability_pattern},
                     {"full_availability_agreement", trends.full_availability_agreement}};
    return doc.dump(2);
}

PreparedInput two_point_fixture(std::int32_t days, std::int32_t trips_per_hour, std::int32_t periods) {
    if (days < 1 || trips_per_hour < 0 || periods < 1 || periods > 24) {
        throw std::invalid_argument("two_point_fixture: bad parameters");
    }
    PreparedInput in;
    in.grid = GridSpec::fixed({41.82, -71.41}, 200.0, 7, 8);
    in.horizon = {0, days};
    in.rebalance_used = RebalanceMode::derive;
    const PeriodScheme scheme{0, static_cast<Seconds>(periods) * 3600, periods};
    const CellIndex active[] = {in.grid.index({3, 2}), in.grid.index({3, 5})};

    // instantaneous round trips leave the single vehicle in place
    std::vector<AvailabilityEvent> events;
    for (const CellIndex c : active) events.push_back({0, c, 1, EventSource::rebalance_add});
    in.timeline = AvailabilityTimeline(std::move(events), in.grid, 0, days, scheme);

    const Seconds spacing = trips_per_hour > 0 ? 3600 / trips_per_hour : 3600;
    for (std::int32_t d = 0; d < days; ++d) {
        for (std::int32_t h = 0; h < periods; ++h) {
            for (std::int32_t q = 0; q < trips_per_hour; ++q) {
                const Seconds t = static_cast<Seconds>(d) * kSecondsPerDay + h * 3600 + q * spacing + spacing / 2;
                for (const CellIndex c : active) in.trips.push_back({t, h, c});
            }
        }
    }
    in.report.rows_read = in.trips.size();
    in.report.rows_kept = in.trips.size();
    in.report.days = days;
    in.report.seeded_vehicles = 2;
    return in;
}

SensitivityReport sensitivity_study(const PreparedInput& data, const ModelInputs& model,
                                    const std::vector<double>& gammas, const EMConfig& base) {
    const std::int32_t days = data.timeline.days();
    EMConfig ref_cfg = base;
    ref_cfg.init_mode = InitMode::gamma_blend;
    ref_cfg.gamma = 0.0;
    const EMResult reference = run_em(data.trips, model.pi, model.alpha, days, ref_cfg);

    SensitivityReport report;
    report.estimable_entries = reference.rates.estimable_count();
    for (const double g : gammas) {
        if (!(g >= 0.0 && g <= 1.0)) throw ValidationError("gammas", "values must lie in [0, 1]");
        EMConfig cfg = base;
        cfg.init_mode = InitMode::gamma_blend;
        cfg.gamma = g;
        const EMResult run = g == 0.0 ? reference : run_em(data.trips, model.pi, model.alpha, days, cfg);
        std::vector<double> diffs;
        diffs.reserve(report.estimable_entries);
        for (std::int32_t h = 0; h < run.rates.period_count(); ++h) {
            for (std::int32_t i = 0; i < run.rates.cell_count(); ++i) {
                if (!run.rates.estimable(h, {i}) || !reference.rates.estimable(h, {i})) continue;
                diffs.push_back(std::abs(run.rates.rate(h, {i}) - reference.rates.rate(h, {i})));
            }
        }
        SensitivityRow row;
        row.gamma = g;
        row.iterations = run.diagnostics.iterations;
        if (!diffs.empty()) {
            std::sort(diffs.begin(), diffs.end());
            row.largest = diffs.back();
            const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(diffs.size())));
            row.p99 = diffs[std::max<std::size_t>(rank, 1) - 1];
            row.median = median_of(diffs);
        }
        report.rows.push_back(row);
    }
    return report;
}

void SensitivityReport::print_table(std::ostream& out) const {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::fixed << std::setprecision(4);
    out << std::setw(8) << "gamma" << std::setw(12) << "largest" << std::setw(12) << "p99" << std::setw(12)
        << "median" << std::setw(8) << "iters" << '\n';
    for (const SensitivityRow& r : rows) {
        out << std::setw(8) << std::setprecision(2) << r.gamma << std::setprecision(4) << std::setw(12) << r.largest
            << std::setw(12) << r.p99 << std::setw(12) << r.median << std::setw(8) << r.iterations << '\n';
    }
    out << "estimable entries compared: " << estimable_entries << '\n';
    out.flags(flags);
    out.precision(precision);
}

void SensitivityReport::write_csv(std::ostream& out) const {
    out << "gamma,largest,p99,median,iterations\n" << std::setprecision(17);
    for (const SensitivityRow& r : rows) {
        out << r.gamma << ',' << r.largest << ',' << r.p99 << ',' << r.median << ',' << r.iterations << '\n';
    }
}

namespace {

constexpr double kMetersPerDegree = kEarthRadiusMeters * 3.14159265358979323846 / 180.0;

std::string us_timestamp(Seconds t) {
    // format_timestamp gives "YYYY-MM-DD HH:MM:SS"
    const std::string iso = format_timestamp(t);
    int hour = std::stoi(iso.substr(11, 2));
    const char* half = hour >= 12 ? "PM" : "AM";
    hour %= 12;
    if (hour == 0) hour = 12;
    std::ostringstream out;
    out << iso.substr(5, 2) << '/' << iso.substr(8, 2) << '/' << iso.substr(0, 4) << ' ' << std::setw(2)
        << std::setfill('0') << hour << iso.substr(13, 6) << ' ' << half;
    return out.str();
}

} // namespace

void write_synthetic_trips(std::ostream& out, const SyntheticConfig& cfg) {
    if (cfg.days < 1 || cfg.hotspots < 1 || !(cfg.radius > 0.0) || cfg.service_end <= cfg.service_start) {
        throw std::invalid_argument("write_synthetic_trips: bad configuration");
    }
    std::mt19937_64 rng = stream(cfg.seed, 0x5E'ED);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    struct Spot {
        double x, y, weight;
    };
    std::vector<Spot> spots;
    for (std::int32_t k = 0; k < cfg.hotspots; ++k) {
        spots.push_back({std::clamp(normal(rng) * cfg.radius / 2.5, -cfg.radius, cfg.radius),
                         std::clamp(normal(rng) * cfg.radius / 2.5, -cfg.radius, cfg.radius), 0.2 + u01(rng)});
    }
    std::vector<double> weights;
    for (const Spot& s : spots) weights.push_back(s.weight);
    std::discrete_distribution<std::size_t> pick_spot(weights.begin(), weights.end());
    const auto place = [&] {
        const Spot& s = spots[pick_spot(rng)];
        return std::pair{std::clamp(s.x + normal(rng) * 600.0, -cfg.radius, cfg.radius),
                         std::clamp(s.y + normal(rng) * 600.0, -cfg.radius, cfg.radius)};
    };
    const double lon_scale = kMetersPerDegree * std::cos(cfg.center.lat * 3.14159265358979323846 / 180.0);
    const auto to_latlon = [&](std::pair<double, double> xy) {
        return LatLon{cfg.center.lat + xy.second / kMetersPerDegree, cfg.center.lon + xy.first / lon_scale};
    };

    // 2019-07-01 00:00 local
    constexpr Seconds kEpoch = 18078LL * kSecondsPerDay;
    out << std::setprecision(8);
    if (cfg.kc_style) {
        out << "Trip ID," << (cfg.vehicles > 0 ? "Vehicle ID," : "")
            << "Start Time,End Time,Start Latitude,Start Longitude,End Latitude,End Longitude\n";
    } else {
        out << "trip_id," << (cfg.vehicles > 0 ? "vehicle_id," : "")
            << "start_time,end_time,start_lat,start_lon,end_lat,end_lon\n";
    }

    struct Vehicle {
        Seconds free_at = 0;
        std::pair<double, double> at;
    };
    std::vector<Vehicle> fleet(static_cast<std::size_t>(std::max(cfg.vehicles, 0)));
    std::size_t written = 0;
    std::vector<Seconds> starts;
    for (std::int32_t d = 0; d < cfg.days; ++d) {
        const std::size_t today = cfg.trips / static_cast<std::size_t>(cfg.days) +
                                  (static_cast<std::size_t>(d) < cfg.trips % static_cast<std::size_t>(cfg.days) ? 1 : 0);
        const Seconds day = kEpoch + static_cast<Seconds>(d) * kSecondsPerDay;
        starts.clear();
        std::uniform_int_distribution<Seconds> when(cfg.service_start, cfg.service_end - 1);
        for (std::size_t k = 0; k < today; ++k) starts.push_back(day + when(rng));
        std::sort(starts.begin(), starts.end());
        for (Vehicle& v : fleet) {
            if (v.free_at == 0) v.at = place();
        }
        for (const Seconds start : starts) {
            std::pair<double, double> from = place();
            std::int32_t vehicle = -1;
            if (!fleet.empty()) {
                std::uniform_int_distribution<std::size_t> any(0, fleet.size() - 1);
                const std::size_t first = any(rng);
                for (std::size_t probe = 0; probe < fleet.size(); ++probe) {
                    const std::size_t k = (first + probe) % fleet.size();
                    if (fleet[k].free_at <= start) {
                        vehicle = static_cast<std::int32_t>(k);
                        break;
                    }
                }
                if (vehicle < 0) continue;
                Vehicle& v = fleet[static_cast<std::size_t>(vehicle)];
                if (u01(rng) < 0.05) v.at = place();  // relocated by the operator
                from = v.at;
            }
            const auto to = place();
            const double dist = std::hypot(to.first - from.first, to.second - from.second);
            const Seconds end = start + 60 + static_cast<Seconds>(std::min(dist / 3.5, 3000.0));
            if (vehicle >= 0) {
                fleet[static_cast<std::size_t>(vehicle)].free_at = end + 1;
                fleet[static_cast<std::size_t>(vehicle)].at = to;
            }
            const LatLon a = to_latlon(from);
            const LatLon b = to_latlon(to);
            out << 'T' << ++written << ',';
            if (vehicle >= 0) out << 'V' << vehicle << ',';
            if (cfg.kc_style) {
                out << us_timestamp(start) << ',' << us_timestamp(end);
            } else {
                out << format_timestamp(start) << ',' << format_timestamp(end);
            }
            out << ',' << a.lat << ',' << a.lon << ',' << b.lat << ',' << b.lon << '\n';
        }
    }
}

} // namespace mmdemand

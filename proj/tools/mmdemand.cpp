// mmdemand: command line front end for estimation, the synthetic experiments,
// the initialization sensitivity study, archive inspection and the HTTP service.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmdemand/archive.hpp"
#include "mmdemand/error.hpp"
#include "mmdemand/params.hpp"
#include "mmdemand/pipeline.hpp"
#include "mmdemand/service.hpp"
#include "mmdemand/simulation.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mmdemand;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Thrown for problems the user can fix by changing the command line.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void print_error(const std::string& kind, const std::string& message, const std::vector<FieldError>& fields = {}) {
    json f = json::array();
    for (const FieldError& e : fields) f.push_back({{"field", e.field}, {"message", e.message}});
    std::cerr << json{{"error", kind}, {"message", message}, {"fields", f}}.dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, text);
}

void require_file(const std::string& flag, const std::string& path) {
    if (!fs::is_regular_file(path)) throw ValidationError(flag, "no such file: " + path);
}

std::string fixed(double v, int digits) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

/// Flags shared by every command that reads a trip file. Values stay as text
/// and go through the same parser as the HTTP query string.
struct DatasetFlags {
    std::string trips;
    std::string schema;
    std::map<std::string, std::string> params;

    void attach(CLI::App* app, bool trips_required) {
        auto* t = app->add_option("--trips", trips, "Trip CSV file");
        if (trips_required) t->required();
        app->add_option("--schema", schema, "Column alias config (JSON)");
        const auto text = [&](const char* flag, const char* key, const char* help) {
            app->add_option_function<std::string>(
                flag, [this, key](const std::string& v) { params[key] = v; }, help);
        };
        text("--cell-width", "cell_width", "Grid cell width in meters (400)");
        text("--p0", "p0", "Probability a user only considers their own cell (0.7)");
        text("--max-dist", "max_dist", "Largest distance a user will travel, meters (1000)");
        text("--periods", "periods", "hourly or a period count tiling the service hours (hourly)");
        text("--service-hours", "service_hours", "Service window HH:MM-HH:MM (00:00-24:00)");
        text("--init", "init", "uniform, trips or gamma=G (uniform)");
        text("--tol", "tol", "Convergence tolerance on the largest rate change (1e-6)");
        text("--max-iters", "max_iters", "Iteration cap (1000)");
        text("--alpha-floor", "alpha_floor", "Cells below this availability are not estimated (0.01)");
        text("--rebalance", "rebalance", "auto, perfect or derive (auto)");
        text("--seed", "seed", "Seed recorded in the manifest (0)");
        text("--utc-offset", "utc_offset", "Fixed local offset for timestamps without one, e.g. -05:00");
        text("--day-start", "day_start", "Service day boundary HH:MM for rebalancing (00:00)");
        text("--delimiter", "delimiter", "Field delimiter (,)");
        text("--threads", "threads", "Worker threads for the E-step (1)");
    }

    EstimateConfig config() const {
        EstimateConfig cfg = config_from_params(params);
        if (!schema.empty()) {
            require_file("schema", schema);
            const SchemaConfig loaded = SchemaConfig::load(schema);
            cfg.schema.columns = loaded.columns;
            if (!params.contains("delimiter")) cfg.schema.delimiter = loaded.delimiter;
            if (!params.contains("utc_offset")) cfg.schema.utc_offset_minutes = loaded.utc_offset_minutes;
        }
        return cfg;
    }
};

// ---------------------------------------------------------------- estimate

struct EstimateCmd {
    DatasetFlags data;
    std::string out = "mmdemand-out";
    bool quiet = false;

    void attach(CLI::App* app) {
        data.attach(app, true);
        app->add_option("--out", out, "Output directory for archive.json, results.csv and manifest.json");
        app->add_flag("--quiet", quiet, "Suppress progress lines");
    }

    int run() const {
        require_file("trips", data.trips);
        const EstimateConfig cfg = data.config();
        std::string last_stage;
        const ProgressFn progress = [&](std::string_view stage, std::int32_t it) {
            if (quiet) return;
            if (stage != last_stage) {
                std::cerr << "[" << stage << "]\n";
                last_stage = stage;
            } else if (it > 0 && it % 50 == 0) {
                std::cerr << "  iteration " << it << '\n';
            }
        };
        const EstimateResult r = estimate_file(data.trips, cfg, progress);

        const fs::path dir(out);
        fs::create_directories(dir);
        write_text(dir / "archive.json", r.archive.to_json());
        write_text(dir / "manifest.json", json::parse(r.archive.manifest_json).dump(2) + "\n");
        std::ostringstream csv;
        r.archive.write_csv(csv);
        write_text(dir / "results.csv", csv.str());

        const auto& d = r.diagnostics;
        const double ll = d.log_likelihood_trace.empty() ? 0.0 : d.log_likelihood_trace.back();
        std::cout << "rows read        " << r.report.rows_read << " (" << r.report.dropped_total() << " dropped)\n"
                  << "trips used       " << r.trips_used << " over " << r.days << " days\n"
                  << "grid             " << r.archive.grid.rows << " x " << r.archive.grid.cols << " cells of "
                  << cfg.cell_width << " m\n"
                  << "periods          " << r.archive.periods.count << "\n"
                  << "estimable        " << r.estimable_entries << " of "
                  << static_cast<std::size_t>(r.archive.grid.cell_count()) * r.archive.periods.count
                  << " (period, cell) pairs\n"
                  << "iterations       " << d.iterations << (d.converged ? " (converged)" : " (iteration cap reached)")
                  << "\n"
                  << "log-likelihood   " << fixed(ll, 6) << "\n"
                  << "p0 / sigma       " << cfg.p0 << " / " << fixed(r.distribution.sigma(), 3) << " m\n"
                  << "written to       " << dir.string() << "\n";
        for (const std::string& w : d.warnings) std::cerr << "warning: " << w << '\n';
        return kExitOk;
    }
};

// ---------------------------------------------------------------- experiment

struct ExperimentCmd {
    std::string p_list = "0:1:0.1";
    std::int32_t reps = 10;
    std::int32_t days = 30;
    double p0 = 0.7;
    double cell_width = 400.0;
    double max_dist = 1000.0;
    std::uint64_t seed = 2024;
    std::int32_t threads = static_cast<std::int32_t>(std::max(1u, std::thread::hardware_concurrency()));
    std::string out;

    void attach(CLI::App* app) {
        app->add_option("--p-list", p_list, "Stocking probabilities, a:b:step or a comma list (0:1:0.1)");
        app->add_option("--reps", reps, "Replications per probability (10)")->check(CLI::PositiveNumber);
        app->add_option("--days", days, "Simulated days per replication (30)")->check(CLI::PositiveNumber);
        app->add_option("--p0", p0, "Own-cell probability (0.7)");
        app->add_option("--cell-width", cell_width, "Cell width in meters (400)");
        app->add_option("--max-dist", max_dist, "Largest travel distance in meters (1000)");
        app->add_option("--seed", seed, "Base seed (2024)");
        app->add_option("--threads", threads, "Worker threads")->check(CLI::Range(1, 256));
        app->add_option("--out", out, "Directory for experiment.csv and experiment.json");
    }

    int run() const {
        ExperimentConfig cfg;
        cfg.p_values = parse_number_list(p_list, 0.0, 1.0, "p_list");
        cfg.replications = reps;
        cfg.days = days;
        cfg.p0 = p0;
        cfg.cell_width = cell_width;
        cfg.dist_max = max_dist;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.validate();

        const ExperimentReport report = run_experiment(cfg);
        report.print_table(std::cout);
        const TrendChecks& t = report.trends;
        const auto line = [](bool ok, const std::string& what) {
            std::cout << (ok ? "PASS  " : "FAIL  ") << what << '\n';
        };
        std::cout << '\n';
        std::ostringstream wins;
        for (const auto& [p, w] : t.border_wins) wins << ' ' << p << ':' << w << '/' << cfg.replications;
        line(t.border_dominance, "EM beats naive on border cells (p, wins):" + wins.str());
        line(t.em_non_increasing, "EM mean error non-increasing in p");
        line(t.naive_non_increasing, "naive mean error non-increasing in p");
        line(t.zero_availability_pattern, "p = 0: naive no-demand max error is 0, EM's is positive");
        line(t.full_availability_agreement, "p = 1: EM equals naive within 1e-6");
        std::cout << "elapsed " << fixed(report.seconds, 1) << " s\n";

        if (!out.empty()) {
            const fs::path dir(out);
            fs::create_directories(dir);
            std::ostringstream csv;
            report.write_csv(csv);
            write_text(dir / "experiment.csv", csv.str());
            write_text(dir / "experiment.json", report.to_json() + "\n");
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------- sensitivity

struct SensitivityCmd {
    DatasetFlags data;
    std::string fixture;
    std::string gammas = "0:1:0.1";
    std::string out;

    void attach(CLI::App* app) {
        data.attach(app, false);
        app->add_option("--fixture", fixture, "Built-in dataset instead of --trips")->check(CLI::IsMember({"two-point"}));
        app->add_option("--gammas", gammas, "Blend weights, a:b:step or a comma list (0:1:0.1)");
        app->add_option("--out", out, "Directory for sensitivity.csv and manifest.json");
    }

    int run() const {
        if (fixture.empty() == data.trips.empty()) throw UsageError("give exactly one of --trips or --fixture");
        const std::vector<double> g = parse_number_list(gammas, 0.0, 1.0, "gammas");
        EstimateConfig cfg = data.config();

        PreparedInput input;
        std::string input_hash;
        if (!fixture.empty()) {
            input = two_point_fixture();
            input_hash = "fixture:" + fixture;
        } else {
            require_file("trips", data.trips);
            std::ifstream in(data.trips, std::ios::binary);
            input = prepare_input(in, cfg);
            input_hash = sha256_file(data.trips);
        }
        const ModelInputs model = build_model_inputs(input.timeline, input.trips, cfg.p0, cfg.dist_max);
        const SensitivityReport report = sensitivity_study(input, model, g, cfg.em);
        report.print_table(std::cout);

        if (!out.empty()) {
            const fs::path dir(out);
            fs::create_directories(dir);
            std::ostringstream csv;
            report.write_csv(csv);
            write_text(dir / "sensitivity.csv", csv.str());
            const json manifest = {{"source", "sensitivity"},
                                   {"config", json::parse(cfg.to_json())},
                                   {"gammas", g},
                                   {"input", fixture.empty() ? data.trips : fixture},
                                   {"input_sha256", input_hash}};
            write_text(dir / "manifest.json", manifest.dump(2) + "\n");
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------- inspect

struct InspectCmd {
    std::string archive;
    std::string period = "all";
    std::string csv;
    bool layers_json = false;

    void attach(CLI::App* app) {
        app->add_option("archive", archive, "Result archive (archive.json)")->required();
        app->add_option("--period", period, "all, a period index or an inclusive range a-b");
        app->add_option("--csv", csv, "Export the per-(period, cell) table to this file");
        app->add_flag("--layers-json", layers_json, "Print the layer document instead of the summary");
    }

    int run() const {
        require_file("archive", archive);
        std::ifstream in(archive, std::ios::binary);
        std::ostringstream text;
        text << in.rdbuf();
        const ResultArchive a = ResultArchive::from_json(text.str());
        const PeriodWindow window = PeriodWindow::parse(period, a.periods.count);
        const LayerSet layers = compute_layers(a, window);

        if (!csv.empty()) {
            std::ostringstream rows;
            a.write_csv(rows);
            write_text(csv, rows.str());
        }
        if (layers_json) {
            std::cout << layers_to_json(a, layers) << '\n';
            return kExitOk;
        }
        const json manifest = json::parse(a.manifest_json);
        std::map<ServiceLevel, std::size_t> counts;
        double demand = 0.0, trips = 0.0;
        for (const LayerCell& c : layers.cells) {
            ++counts[c.category];
            demand += c.demand.value_or(0.0);
            trips += c.trip_rate;
        }
        std::cout << "source             " << manifest.value("source", "?") << '\n'
                  << "input sha256       " << manifest.value("input_sha256", "") << '\n'
                  << "grid               " << a.grid.rows << " x " << a.grid.cols << '\n'
                  << "periods            " << a.periods.count << '\n'
                  << "window             " << period << '\n'
                  << "total demand       " << fixed(demand, 4) << " per period-day\n"
                  << "total trip rate    " << fixed(trips, 4) << " per period-day\n";
        for (ServiceLevel s : {ServiceLevel::ok, ServiceLevel::low_service, ServiceLevel::insufficient_data}) {
            std::cout << std::left << std::setw(19) << to_string(s) << counts[s] << '\n';
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------- serve

HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

struct ServeCmd {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string workspace;
    std::int32_t workers = 1;

    void attach(CLI::App* app) {
        app->add_option("--host", host, "Listen address (127.0.0.1)");
        app->add_option("--port", port, "Listen port, 0 picks one (8080)")->check(CLI::Range(0, 65535));
        app->add_option("--workspace", workspace, "Job directory (MMDEMAND_WORKSPACE, else ./mmdemand-workspace)");
        app->add_option("--workers", workers, "Concurrent jobs (1)")->check(CLI::Range(1, 64));
    }

    int run() const {
        fs::path root = workspace;
        if (root.empty()) {
            const char* env = std::getenv("MMDEMAND_WORKSPACE");
            root = env && *env ? env : "mmdemand-workspace";
        }
        JobService jobs(ServiceConfig{root, workers});
        HttpServer server(jobs);
        const int bound = server.bind(host, port);
        if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cout << "listening on http://" << host << ':' << bound << "  workspace " << root.string() << std::endl;
        server.serve();
        g_server = nullptr;
        jobs.shutdown();
        return kExitOk;
    }
};

// ---------------------------------------------------------------- generate

struct GenerateCmd {
    SyntheticConfig cfg;
    std::string out;

    void attach(CLI::App* app) {
        app->add_option("--out", out, "Output CSV")->required();
        app->add_option("--trips", cfg.trips, "Trip rows (10000)");
        app->add_option("--days", cfg.days, "Days covered (30)")->check(CLI::PositiveNumber);
        app->add_option("--vehicles", cfg.vehicles, "Vehicle count; 0 omits vehicle ids (800)")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--radius", cfg.radius, "Service area half-width in meters (8000)");
        app->add_option("--seed", cfg.seed, "Generator seed (7)");
        app->add_flag("--kc-style", cfg.kc_style, "Kansas City open-data headers and timestamps");
    }

    int run() const {
        std::ostringstream text;
        write_synthetic_trips(text, cfg);
        write_text(out, text.str());
        std::cout << "wrote " << cfg.trips << " trips to " << out << '\n';
        return kExitOk;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Censored micromobility demand estimation"};
    app.set_version_flag("--version", "mmdemand 1.0.0");
    app.require_subcommand(1);

    EstimateCmd estimate_cmd;
    ExperimentCmd experiment_cmd;
    SensitivityCmd sensitivity_cmd;
    InspectCmd inspect_cmd;
    ServeCmd serve_cmd;
    GenerateCmd generate_cmd;
    auto* estimate_app = app.add_subcommand("estimate", "Estimate demand from a trip file");
    auto* experiment_app = app.add_subcommand("experiment", "Synthetic stocking-probability experiment");
    auto* sensitivity_app = app.add_subcommand("sensitivity", "Sensitivity of EM to its starting point");
    auto* inspect_app = app.add_subcommand("inspect", "Summarize or export a result archive");
    auto* serve_app = app.add_subcommand("serve", "Run the HTTP job service");
    auto* generate_app = app.add_subcommand("generate", "Write a synthetic trip file");
    estimate_cmd.attach(estimate_app);
    experiment_cmd.attach(experiment_app);
    sensitivity_cmd.attach(sensitivity_app);
    inspect_cmd.attach(inspect_app);
    serve_cmd.attach(serve_app);
    generate_cmd.attach(generate_app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return kExitUsage;
    }

    try {
        if (estimate_app->parsed()) return estimate_cmd.run();
        if (experiment_app->parsed()) return experiment_cmd.run();
        if (sensitivity_app->parsed()) return sensitivity_cmd.run();
        if (inspect_app->parsed()) return inspect_cmd.run();
        if (serve_app->parsed()) return serve_cmd.run();
        if (generate_app->parsed()) return generate_cmd.run();
    } catch (const ValidationError& e) {
        print_error("validation", e.what(), e.errors());
        return kExitUsage;
    } catch (const UsageError& e) {
        print_error("usage", e.what());
        return kExitUsage;
    } catch (const ParseError& e) {
        print_error("parse", e.what());
        return kExitRuntime;
    } catch (const DataIntegrityError& e) {
        print_error("data_integrity", e.what());
        return kExitRuntime;
    } catch (const InfeasibleParameterError& e) {
        print_error("infeasible_parameter", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        print_error("runtime", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}

#include <benchmark/benchmark.h>

#include <map>
#include <sstream>

#include "mmdemand/params.hpp"
#include "mmdemand/pipeline.hpp"
#include "mmdemand/simulation.hpp"

using namespace mmdemand;

namespace {

std::string synthetic_csv(std::size_t trips) {
    SyntheticConfig sc;
    sc.trips = trips;
    std::ostringstream out;
    write_synthetic_trips(out, sc);
    return out.str();
}

const EstimateConfig& city_config() {
    static const EstimateConfig cfg = config_from_params({{"service_hours", "06:00-22:00"}});
    return cfg;
}

const PreparedInput& prepared(std::size_t trips) {
    static std::map<std::size_t, PreparedInput> cache;
    auto it = cache.find(trips);
    if (it == cache.end()) {
        std::istringstream in(synthetic_csv(trips));
        it = cache.emplace(trips, prepare_input(in, city_config())).first;
    }
    return it->second;
}

void BM_ParseAndPrepare(benchmark::State& state) {
    const std::string csv = synthetic_csv(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        std::istringstream in(csv);
        benchmark::DoNotOptimize(prepare_input(in, city_config()));
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * csv.size()));
}
BENCHMARK(BM_ParseAndPrepare)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_NearestProfile(benchmark::State& state) {
    const PreparedInput& in = prepared(static_cast<std::size_t>(state.range(0)));
    const DistanceClassTable classes(in.grid, 1000.0);
    for (auto _ : state) benchmark::DoNotOptimize(nearest_profile(in.timeline, classes));
}
BENCHMARK(BM_NearestProfile)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_ModelInputs(benchmark::State& state) {
    const PreparedInput& in = prepared(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(build_model_inputs(in.timeline, in.trips, 0.7, 1000.0));
}
BENCHMARK(BM_ModelInputs)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

// A fixed iteration count so the timing measures per-iteration cost.
void BM_EmIterations(benchmark::State& state) {
    const PreparedInput& in = prepared(static_cast<std::size_t>(state.range(0)));
    const ModelInputs model = build_model_inputs(in.timeline, in.trips, 0.7, 1000.0);
    EMConfig cfg;
    cfg.tol = 1e-300;
    cfg.max_iters = 50;
    for (auto _ : state) benchmark::DoNotOptimize(run_em(in.trips, model.pi, model.alpha, in.horizon.days, cfg));
    state.SetItemsProcessed(state.iterations() * cfg.max_iters * static_cast<std::int64_t>(in.trips.size()));
}
BENCHMARK(BM_EmIterations)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_SimulateExperimentDays(benchmark::State& state) {
    const Layout layout = layout_grid(400.0);
    const DistanceClassTable classes(layout.grid, 1000.0);
    const auto dist = make_threshold_distribution(0.7, classes);
    std::uint64_t seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(simulate_days(layout, 0.5, dist, classes, seed++));
}
BENCHMARK(BM_SimulateExperimentDays)->Unit(benchmark::kMillisecond);

} // namespace
BENCHMARK_MAIN();

// Serial reference path against the OpenMP path for each parallel kernel.
// Argument 0 selects the serial path; n > 0 runs an OpenMP team of n.
#include <cmath>
#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "hjb/errors.hpp"
#include "hjb/problems.hpp"
#include "hjb/rng.hpp"

using namespace hjb;

namespace {

Execution mode(const benchmark::State& state) {
    return state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
}

int team(const benchmark::State& state) { return static_cast<int>(state.range(0)); }

std::vector<double> points(int d, int count) {
    const CounterRng rng(3);
    std::vector<double> out(static_cast<std::size_t>(d) * count);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = rng.uniform(k);
    return out;
}

std::vector<double> samples(const SparseGrid& grid) {
    std::vector<double> out(grid.size());
    for (std::size_t id = 0; id < grid.size(); ++id) {
        double v = 1.0;
        for (double x : grid.ref(id)) v *= std::cos(2.0 * x);
        out[id] = v;
    }
    return out;
}

const std::shared_ptr<const SparseGrid>& cgl_grid() {
    static const auto grid = std::make_shared<const SparseGrid>(build_grid(NodeFamily::CGL, 6, 11));
    return grid;
}

void BM_CombinationEval(benchmark::State& state) {
    const auto& grid = cgl_grid();
    const CombinationInterpolant comb(grid, samples(*grid));
    const auto pts = points(6, 256);
    for (auto _ : state) benchmark::DoNotOptimize(comb.eval_ref_many(pts, mode(state), team(state)));
    state.SetItemsProcessed(state.iterations() * 256);
}

void BM_HierarchicalFit(benchmark::State& state) {
    const auto& grid = cgl_grid();
    const auto values = samples(*grid);
    FitOptions o;
    o.execution = mode(state);
    o.workers = team(state);
    for (auto _ : state) benchmark::DoNotOptimize(fit_hierarchical(grid, values, 1, o));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid->size()));
}

void BM_HierarchicalEval(benchmark::State& state) {
    const auto& grid = cgl_grid();
    const auto interp = fit_hierarchical(grid, samples(*grid));
    const auto pts = points(6, 256);
    for (auto _ : state) benchmark::DoNotOptimize(interp.eval_ref_many(pts, mode(state), team(state)));
    state.SetItemsProcessed(state.iterations() * 256);
}

void BM_MonteCarlo(benchmark::State& state) {
    const auto& grid = cgl_grid();
    for (auto _ : state)
        benchmark::DoNotOptimize(mc_ebvp(grid, 200, 1, 1.0, EpsilonModel::Symmetric, mode(state), team(state)));
}

void BM_Sweep(benchmark::State& state) {
    const auto cp = make_example3();
    auto grid = std::make_shared<const SparseGrid>(build_grid(NodeFamily::CGL, 4, 6, cp.domain));
    SweepOptions o;
    o.characteristic.tol = 1e-6;
    o.execution = mode(state);
    o.workers = team(state);
    for (auto _ : state) benchmark::DoNotOptimize(sweep(cp, grid, o));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(grid->size()));
}

void teams(benchmark::internal::Benchmark* b) {
    b->Arg(0);
    for (int n = 1; n <= default_workers(); n *= 2) b->Arg(n);
    b->Unit(benchmark::kMillisecond)->UseRealTime();
}

}  // namespace

BENCHMARK(BM_CombinationEval)->Apply(teams);
BENCHMARK(BM_HierarchicalFit)->Apply(teams);
BENCHMARK(BM_HierarchicalEval)->Apply(teams);
BENCHMARK(BM_MonteCarlo)->Apply(teams);
BENCHMARK(BM_Sweep)->Apply(teams);

BENCHMARK_MAIN();

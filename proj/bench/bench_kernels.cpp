// Serial reference vs OpenMP path for the data-parallel kernels.
// Arg 0 selects the path: 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include "bdsde/mc_solver.hpp"
#include "bdsde/regularize.hpp"
#include "bdsde/tree_solver.hpp"

using namespace bdsde;

namespace {

Exec execOf(const benchmark::State& state) { return state.range(0) ? Exec::Parallel : Exec::Serial; }

void BM_TreeSolve(benchmark::State& state) {
  const auto d = builtinDriver("f_linear", {0.5, 0.2}, "g_sine", {0.5, 0.3});
  const auto xi = builtinTerminal("call", {0.0});
  const auto grid = makeGrid(1.0, static_cast<int>(state.range(1)));
  TreeOptions opt;
  opt.exec = execOf(state);
  for (auto _ : state) benchmark::DoNotOptimize(solveTree(d, xi, grid, opt).Y[0][0]);
  state.SetItemsProcessed(state.iterations() * grid.steps() * (std::int64_t{1} << grid.steps()));
}
BENCHMARK(BM_TreeSolve)->ArgsProduct({{0, 1}, {14, 18}})->Unit(benchmark::kMillisecond);

void BM_SupConvTable(benchmark::State& state) {
  const DriverPart f = fPartOf(builtinDriver("f_sqrt_pos", {2.0}));
  const auto spec = ConvGridSpec::forTolerance(128.0, 1e-3, 4.0, latticeAxes(f));
  for (auto _ : state) {
    auto r = supConv(f, 128.0, spec, execOf(state));
    benchmark::DoNotOptimize(r(0.5, 0.1, 0.0));
  }
}
BENCHMARK(BM_SupConvTable)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_LSMC(benchmark::State& state) {
  const auto d = builtinDriver("f_linear", {0.5, 0.2}, "g_linear", {0.3});
  const auto xi = builtinTerminal("call", {0.0});
  const auto paths = samplePaths(makeGrid(1.0, 16), 8, 20000, 7, false);
  for (auto _ : state) benchmark::DoNotOptimize(solveLSMC(d, xi, BasisSpec{}, paths, execOf(state)).y0[0]);
}
BENCHMARK(BM_LSMC)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SamplePaths(benchmark::State& state) {
  const auto grid = makeGrid(1.0, 64);
  for (auto _ : state)
    benchmark::DoNotOptimize(samplePaths(grid, 16, 20000, 3, true, 1, 1, execOf(state)).dB[0]);
}
BENCHMARK(BM_SamplePaths)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ForwardSegment(benchmark::State& state) {
  const auto d = builtinDriver("f_sqrt_pos", {2.0}, "g_linear", {0.9});
  const auto grid = makeGrid(1.0, 16);
  const InverseFn hInv = [](double, double, double zt) { return zt / 0.9; };
  const std::vector<double> eta(std::size_t{1} << 16, 0.25);
  ForwardOptions opt;
  opt.exec = execOf(state);
  opt.strict = false;
  for (auto _ : state)
    benchmark::DoNotOptimize(solveForwardSwapped(d, hInv, eta, grid, 8, opt).field.Y[16][0]);
}
BENCHMARK(BM_ForwardSegment)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

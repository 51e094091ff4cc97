// OpenMP kernels against the serial reference. Arguments: d, M.
#include <benchmark/benchmark.h>

#include "cmldiff/kernels.hpp"
#include "cmldiff/srb.hpp"

using namespace cmldiff;

namespace {

const LocalChaoticMap kMap{MapVariant::Doubling, 0.05};

CurrentModel model_for(int d) { return {0.25 / d, 1.0 / (16.0 * d)}; }

ThetaField theta_for(const benchmark::State& state) {
  const Geometry geo(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  return SRBSampler{geo, kMap, 0, 0}.initial(0);
}

template <auto Step>
void theta_step(benchmark::State& state) {
  const auto theta = theta_for(state);
  std::vector<double> out(theta.values().size());
  for (auto _ : state) {
    Step(theta, kMap, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * theta.geometry().sites());
}

template <auto Assemble>
void assemble_stencil(benchmark::State& state) {
  const auto theta = theta_for(state);
  const int d = theta.geometry().dim();
  std::vector<double> stencil(theta.geometry().sites() * stencil_width(d));
  for (auto _ : state) {
    Assemble(theta, model_for(d), stencil);
    benchmark::DoNotOptimize(stencil.data());
  }
  state.SetItemsProcessed(state.iterations() * theta.geometry().sites());
}

template <auto Apply>
void apply_stencil(benchmark::State& state) {
  const auto theta = theta_for(state);
  const Geometry& geo = theta.geometry();
  std::vector<double> stencil(geo.sites() * stencil_width(geo.dim()));
  kernels::assemble_stencil(theta, model_for(geo.dim()), stencil);
  std::vector<double> in(geo.sites(), 1.0), out(geo.sites());
  for (auto _ : state) {
    Apply(geo, stencil, in, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * geo.sites());
}

void sizes(benchmark::internal::Benchmark* b) {
  b->Args({1, 1 << 16})->Args({2, 256})->Args({3, 40});
}

}  // namespace

BENCHMARK(theta_step<kernels::theta_step>)->Name("theta_step/omp")->Apply(sizes);
BENCHMARK(theta_step<kernels::reference::theta_step>)->Name("theta_step/serial")->Apply(sizes);
BENCHMARK(assemble_stencil<kernels::assemble_stencil>)->Name("assemble_stencil/omp")->Apply(sizes);
BENCHMARK(assemble_stencil<kernels::reference::assemble_stencil>)->Name("assemble_stencil/serial")->Apply(sizes);
BENCHMARK(apply_stencil<kernels::apply_stencil>)->Name("apply_stencil/omp")->Apply(sizes);
BENCHMARK(apply_stencil<kernels::reference::apply_stencil>)->Name("apply_stencil/serial")->Apply(sizes);

BENCHMARK_MAIN();

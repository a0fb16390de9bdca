// Microbenchmarks for the per-snapshot pipeline stages. The interesting
// comparison is the isolation step: the full-batch rule touches every
// scenario while the per-coordinate rule does two passes regardless of m.

#include <benchmark/benchmark.h>

#include "secest/bayes.hpp"
#include "secest/optimal.hpp"
#include "secest/scalable.hpp"

using namespace secest;
using model::DensityFamily;
using model::ModelSpace;
using model::ObservationBatch;
using model::ParameterPrior;

namespace {

ModelSpace sensor_array(int m, int n) {
  std::vector<DensityFamily> g0(m, DensityFamily::gaussian_mean_shift(1.0, 1.0));
  std::vector<DensityFamily> g1(m, DensityFamily::gaussian_mean_shift(1.0, 4.0));
  return ModelSpace(m, n, 1, 0.2, {}, std::move(g0), std::move(g1),
                    ParameterPrior::gaussian(0.0, 4.0));
}

void bm_isolate_optimal(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  ModelSpace ms = sensor_array(m, 4);
  auto [X, Y] = ms.sample(1, 7);
  (void)X;
  for (auto _ : state)
    benchmark::DoNotOptimize(scalable::isolate_optimal(ms, Y));
  state.SetComplexityN(m);
}

void bm_isolate_lr(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  ModelSpace ms = sensor_array(m, 4);
  auto [X, Y] = ms.sample(1, 7);
  (void)X;
  for (auto _ : state) benchmark::DoNotOptimize(scalable::isolate_lr(ms, Y));
  state.SetComplexityN(m);
}

void bm_detect(benchmark::State& state) {
  ModelSpace ms = sensor_array(static_cast<int>(state.range(0)), 4);
  scalable::BinaryDetector det;
  det.log_threshold = 0.0;
  auto [X, Y] = ms.sample(0, 9);
  (void)X;
  for (auto _ : state)
    benchmark::DoNotOptimize(scalable::np_detect(ms, Y, det));
}

void bm_posterior_estimate(benchmark::State& state) {
  ModelSpace ms = sensor_array(4, static_cast<int>(state.range(0)));
  auto [X, Y] = ms.sample(0, 11);
  (void)X;
  for (auto _ : state)
    benchmark::DoNotOptimize(bayes::optimal_model_estimate(ms, 0, Y));
}

void bm_build_cache(benchmark::State& state) {
  ModelSpace ms = sensor_array(2, 1);
  num::MonteCarloConfig mc;
  mc.samples = static_cast<std::size_t>(state.range(0));
  mc.seed = 3;
  mc.workers = 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        optimal::build_cache(ms, bayes::CostFunction{}, mc));
}

BENCHMARK(bm_isolate_optimal)->RangeMultiplier(2)->Range(2, 64)->Complexity();
BENCHMARK(bm_isolate_lr)->RangeMultiplier(2)->Range(2, 64)->Complexity();
BENCHMARK(bm_detect)->RangeMultiplier(4)->Range(2, 32);
BENCHMARK(bm_posterior_estimate)->RangeMultiplier(4)->Range(1, 64);
BENCHMARK(bm_build_cache)->Arg(100)->Arg(400);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "usim/alignment.hpp"
#include "usim/functional.hpp"
#include "usim/linalg.hpp"
#include "usim/metrics.hpp"
#include "usim/synthetic.hpp"

using namespace usim;

namespace {

ScenarioPair pair_for(Index n, Index d) {
  ScenarioSpec s;
  s.kind = ScenarioKind::AffineTwin;
  s.n = n;
  s.d = d;
  s.noise_sigma = 0.1;
  s.seed = 1;
  return generate(s);
}

void BM_Procrustes(benchmark::State& state) {
  const auto p = pair_for(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(fit_orthogonal(p.z1, p.z2));
}
BENCHMARK(BM_Procrustes)->Args({400, 8})->Args({2000, 8})->Args({2000, 64});

void BM_AffineFit(benchmark::State& state) {
  const auto p = pair_for(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(fit_affine(p.z1, p.z2));
}
BENCHMARK(BM_AffineFit)->Args({400, 8})->Args({2000, 64});

void BM_LinearCka(benchmark::State& state) {
  const auto p = pair_for(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(linear_cka(p.z1, p.z2));
}
BENCHMARK(BM_LinearCka)->Args({400, 8})->Args({2000, 64});

void BM_Rsa(benchmark::State& state) {
  const auto p = pair_for(state.range(0), 8);
  for (auto _ : state) benchmark::DoNotOptimize(rsa(p.z1, p.z2));
}
BENCHMARK(BM_Rsa)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_Svcca(benchmark::State& state) {
  const auto p = pair_for(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(svcca(p.z1, p.z2));
}
BENCHMARK(BM_Svcca)->Args({400, 8})->Args({2000, 64});

void BM_Stitch(benchmark::State& state) {
  const auto p = pair_for(400, 8);
  const auto family = PredictiveFamily::of(static_cast<FamilyKind>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        stitch(p.z2, p.z1, family, TrainConfig::head_defaults(), TrainConfig::stitcher_defaults()));
  }
}
BENCHMARK(BM_Stitch)
    ->Arg(static_cast<int>(FamilyKind::Orthogonal))
    ->Arg(static_cast<int>(FamilyKind::OrthogonalScale))
    ->Arg(static_cast<int>(FamilyKind::Affine))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

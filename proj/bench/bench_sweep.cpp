#include <vector>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "prophet/experiment.hpp"

using namespace prophet;

namespace {

std::vector<ExperimentConfig> grid() {
  std::vector<ExperimentConfig> points;
  for (const char* mech : {"prophet", "occ", "2pl"}) {
    for (std::uint32_t shards : {4u, 8u}) {
      for (std::uint64_t seed : {1u, 2u}) {
        ExperimentConfig cfg;
        apply_setting(cfg, "mechanism", mech);
        apply_setting(cfg, "seed", std::to_string(seed));
        cfg.sim.n_shards = shards;
        cfg.workload.n_txns = 400;
        points.push_back(cfg);
      }
    }
  }
  return points;
}

void BM_SweepSerial(benchmark::State& state) {
  const auto points = grid();
  for (auto _ : state) benchmark::DoNotOptimize(run_sweep_serial(points));
}

void BM_SweepParallel(benchmark::State& state) {
  const auto points = grid();
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(run_sweep_parallel(points));
}

}  // namespace

BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

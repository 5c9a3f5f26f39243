#include <benchmark/benchmark.h>

#include <vector>

#include "selfsim/ca.hpp"
#include "selfsim/models.hpp"
#include "selfsim/ops.hpp"
#include "selfsim/rng.hpp"
#include "selfsim/trainer.hpp"
#include "selfsim/vicsek.hpp"

using namespace selfsim;

namespace {

Tensor uniform(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv1D(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = uniform({64, 1, n}, rng);
  const Tensor k = uniform({8, 1, 3}, rng);
  const std::vector<std::size_t> stride{1};
  for (auto _ : state) benchmark::DoNotOptimize(conv_circular(x, k, stride));
  state.SetItemsProcessed(state.iterations() * 64 * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Conv1D)->Arg(64)->Arg(256);

void BM_Conv2D(benchmark::State& state) {
  Rng rng(2);
  const Tensor x = uniform({8, 3, 32, 32}, rng);
  const Tensor k = uniform({8, 3, 2, 2}, rng);
  const std::vector<std::size_t> stride{1, 1};
  for (auto _ : state) benchmark::DoNotOptimize(conv_circular(x, k, stride));
}
BENCHMARK(BM_Conv2D);

// One stage-1 epoch over 2000 CA transitions on a 64-site lattice.
void BM_Stage1Epoch(benchmark::State& state) {
  Rng rng(3);
  std::vector<Trajectory> data;
  for (int i = 0; i < 250; ++i) data.push_back(eca_run(CARule(110), random_binary_field(64, rng), 10));
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  cfg.learning_rate = 0.01;
  cfg.validation_fraction = 0.2;
  for (auto _ : state) benchmark::DoNotOptimize(train_stage1(data, DynamicsConfig{}, cfg));
}
BENCHMARK(BM_Stage1Epoch)->Unit(benchmark::kMillisecond);

void BM_VicsekStep(benchmark::State& state) {
  Rng rng(4);
  VicsekConfig cfg;
  cfg.L = static_cast<double>(state.range(0));
  cfg.eta = 1.5;
  ParticleState p = vicsek_init(cfg, rng);
  for (auto _ : state) p = vicsek_step(p, rng);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.size()));
}
BENCHMARK(BM_VicsekStep)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "gfoes/experiment.hpp"

using namespace gfoes;

namespace {

const Task& task() {
  static const Task t = prepare_task(default_config());
  return t;
}

void BM_LossAndGrad(benchmark::State& state) {
  const auto& t = task();
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  const LabeledDataset batch = t.split.retain.subset(rows);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(t.theta0, batch));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_LossAndGrad)->Arg(32)->Arg(256);

void BM_TrainEpoch(benchmark::State& state) {
  const auto& t = task();
  TrainConfig cfg = original_protocol(1);
  cfg.epochs = 1;
  for (auto _ : state) {
    ClassifierModel m = t.theta0;
    fit(m, t.split.retain_subset, cfg);
    benchmark::DoNotOptimize(m);
  }
}
BENCHMARK(BM_TrainEpoch);

void BM_GfnIteration(benchmark::State& state) {
  const auto& t = task();
  GfnConfig cfg = default_config().gfn_config();
  cfg.epochs = 1;
  cfg.first_order = state.range(0) != 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(train_gfn(t.theta0, t.split.retain_subset, t.split.forgotten, cfg));
}
BENCHMARK(BM_GfnIteration)->ArgName("first_order")->Arg(0)->Arg(1);

void BM_Unlearn(benchmark::State& state) {
  const auto& t = task();
  const ExperimentConfig cfg = default_config();
  for (auto _ : state) {
    benchmark::DoNotOptimize(gfoes_unlearn(t.theta0, t.split.retain_subset, t.split.forgotten,
                                           cfg.gfn_config(), cfg.unlearn_config()));
  }
  state.SetLabel("20 GFN iterations + erasure + recovery");
}
BENCHMARK(BM_Unlearn)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

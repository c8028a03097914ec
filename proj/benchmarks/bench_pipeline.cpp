#include <benchmark/benchmark.h>

#include "zonalseg/dataset.hpp"
#include "zonalseg/experiments.hpp"
#include "zonalseg/model.hpp"
#include "zonalseg/training.hpp"

using namespace zonalseg;

namespace {

Dataset bench_dataset() {
  DatasetDescriptor d;
  d.tag = "bench";
  d.patients = 2;
  d.slices_per_patient = 4;
  d.canvas = 72;
  d.profile = default_phantom_profiles().front();
  return generate_phantom_dataset(d, 99);
}

void BM_ModelForward(benchmark::State& state) {
  ModelSpec spec;
  spec.variant = ModelVariant::enc_dec_use;
  spec.depth = 4;
  spec.base_width = 8;
  const ModelState model = build_model(spec, 1);
  Tensor batch({4, 1, 64, 64});
  Rng rng(2);
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = rng.uniform(0.0, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(model, batch));
  }
}
BENCHMARK(BM_ModelForward);

void BM_TrainStep(benchmark::State& state) {
  const Dataset dataset = bench_dataset();
  std::vector<SliceRecord> slices;
  for (const auto& p : dataset.patients) {
    for (const auto& s : p.slices) slices.push_back(mask_to_wg(s));
  }
  ModelSpec spec;
  spec.variant = ModelVariant::enc_dec_use;
  spec.depth = 4;
  spec.base_width = 8;

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr_decay_epochs = {};
  cfg.batch_size = 4;
  cfg.crop = 64;
  for (auto _ : state) {
    ModelState model = build_model(spec, 1);
    train(model, slices, cfg);
    benchmark::DoNotOptimize(model);
  }
  state.SetItemsProcessed(state.iterations() * slices.size());
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_EvaluateSlice(benchmark::State& state) {
  const Dataset dataset = bench_dataset();
  ModelSpec spec;
  spec.variant = ModelVariant::enc_dec_use;
  spec.depth = 4;
  spec.base_width = 8;
  const ModelState model = build_model(spec, 1);
  const SliceRecord& slice = dataset.patients.front().slices.front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_slice(model, slice, 64));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EvaluateSlice)->Unit(benchmark::kMillisecond);

}  // namespace

#include <benchmark/benchmark.h>

#include "zonalseg/gradcheck.hpp"
#include "zonalseg/mask.hpp"
#include "zonalseg/metrics.hpp"
#include "zonalseg/rng.hpp"
#include "zonalseg/stats.hpp"
#include "zonalseg/tape.hpp"

using namespace zonalseg;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(1);
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const Tensor input = random_tensor(rng, {4, c, hw, hw});
  const Tensor kernel = random_tensor(rng, {c, c, 3, 3});
  const Tensor bias = random_tensor(rng, {c});
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(
        tape.conv2d(tape.constant(input), tape.constant(kernel), tape.constant(bias)));
  }
  state.SetItemsProcessed(state.iterations() * 4 * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv2dForward)->Args({8, 64})->Args({16, 32})->Args({32, 16});

void BM_Conv2dForwardBackward(benchmark::State& state) {
  Rng rng(1);
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const Tensor input = random_tensor(rng, {4, c, hw, hw});
  const Tensor kernel = random_tensor(rng, {c, c, 3, 3});
  const Tensor bias = random_tensor(rng, {c});
  for (auto _ : state) {
    Tape tape;
    const VarId x = tape.input(input);
    const VarId y = tape.conv2d(x, tape.input(kernel), tape.input(bias));
    tape.backward(tape.sum(y));
    benchmark::DoNotOptimize(tape.grad(x));
  }
  state.SetItemsProcessed(state.iterations() * 4 * c * c * 9 * hw * hw * 3);
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({8, 64})->Args({16, 32})->Args({32, 16});

void BM_MaxPool(benchmark::State& state) {
  Rng rng(2);
  const Tensor input = random_tensor(rng, {4, 16, 64, 64});
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(tape.max_pool_2x2(tape.constant(input)));
  }
}
BENCHMARK(BM_MaxPool);

void BM_SEBlock(benchmark::State& state) {
  Rng rng(3);
  const Tensor features = random_tensor(rng, {4, 16, 32, 32});
  const Tensor reduce = random_tensor(rng, {16, 2});
  const Tensor expand = random_tensor(rng, {2, 16});
  for (auto _ : state) {
    Tape tape;
    const VarId x = tape.constant(features);
    const VarId z = tape.global_avg_pool(x);
    const VarId h = tape.activation(tape.matmul(z, tape.constant(reduce)), Activation::relu);
    const VarId s = tape.activation(tape.matmul(h, tape.constant(expand)), Activation::sigmoid);
    benchmark::DoNotOptimize(tape.scale_channels(x, s));
  }
}
BENCHMARK(BM_SEBlock);

void BM_FillHoles(benchmark::State& state) {
  Rng rng(4);
  BinaryMask mask(128, 128);
  for (std::size_t i = 0; i < mask.size(); ++i) mask.cells()[i] = rng.uniform() < 0.45;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fill_holes(mask));
  }
}
BENCHMARK(BM_FillHoles);

void BM_BoundaryDistance(benchmark::State& state) {
  BinaryMask a(96, 96), b(96, 96);
  for (std::size_t r = 30; r < 70; ++r) {
    for (std::size_t c = 26; c < 66; ++c) {
      a.set(r, c, true);
      b.set(r - 4, c + 3, true);
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(avg_max_distance(a, b));
  }
}
BENCHMARK(BM_BoundaryDistance);

void BM_Friedman(benchmark::State& state) {
  Rng rng(6);
  std::vector<std::vector<double>> scores(84, std::vector<double>(5));
  for (auto& row : scores) {
    for (auto& v : row) v = rng.uniform(60.0, 95.0);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(friedman(scores));
  }
}
BENCHMARK(BM_Friedman);

}  // namespace

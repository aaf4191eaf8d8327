#include <benchmark/benchmark.h>

#include <random>

#include "densehar/infer.hpp"
#include "densehar/layers.hpp"
#include "densehar/model.hpp"

using namespace densehar;

namespace {

FeatureMap uniform_map(std::size_t c, std::size_t r, std::size_t s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  FeatureMap m(c, r, s);
  for (float& v : m.values()) v = u(rng);
  return m;
}

FcnModel model_for(std::size_t rows) {
  ArchConfig c;
  c.input_rows = rows;
  c.class_count = 3;
  Rng rng(1);
  return build_fcn(c, InitScheme::kHeNormal, rng);
}

LabeledSequence sequence(std::size_t dims, std::size_t length) {
  LabeledSequence s;
  s.dims = dims;
  s.length = length;
  s.features.resize(dims * length);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : s.features) v = u(rng);
  return s;
}

// args: channels in, rows, steps
void BM_ConvForward(benchmark::State& state) {
  const auto in = static_cast<std::size_t>(state.range(0));
  const auto rows = static_cast<std::size_t>(state.range(1));
  const auto steps = static_cast<std::size_t>(state.range(2));
  const FeatureMap x = uniform_map(in, rows, steps, 3);
  auto p = ConvParams::zeros(32, in, 3, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.0f, 0.1f);
  for (float& w : p.weights) w = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, p, Padding::kSame));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(steps));
}
BENCHMARK(BM_ConvForward)->Args({1, 8, 100})->Args({32, 8, 100})->Args({32, 8, 1000})->Args({32, 113, 100});

void BM_ModelForward(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  const FcnModel m = model_for(8);
  const FeatureMap x = uniform_map(1, 8, steps, 5);
  for (auto _ : state) benchmark::DoNotOptimize(predict_probs(m, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(steps));
}
BENCHMARK(BM_ModelForward)->Arg(24)->Arg(100)->Arg(1000);

void BM_DensePredict(benchmark::State& state) {
  const auto length = static_cast<std::size_t>(state.range(0));
  const FcnModel m = model_for(8);
  const LabeledSequence s = sequence(8, length);
  const TilePlan plan = plan_tiles(length, 100, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(dense_predict(m, s, plan));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(length));
}
BENCHMARK(BM_DensePredict)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_WindowPredict(benchmark::State& state) {
  const auto length = static_cast<std::size_t>(state.range(0));
  const FcnModel m = model_for(8);
  const LabeledSequence s = sequence(8, length);
  for (auto _ : state) benchmark::DoNotOptimize(window_emulation_predict(m, s, 24, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(length));
}
BENCHMARK(BM_WindowPredict)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <random>

#include "fdlite/kernels.hpp"
#include "fdlite/netgraph.hpp"
#include "fdlite/executor.hpp"

using namespace fdlite;
using namespace fdlite::kernels;

namespace {

TensorBuf random_tensor(TensorShape s, std::uint64_t seed) {
  TensorBuf t(s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// args: channels in, channels out, groups, stride
void conv_shape(benchmark::internal::Benchmark* b) {
  b->Args({32, 64, 1, 1})->Args({64, 64, 64, 1})->Args({64, 128, 1, 2})->Args({64, 64, 8, 1});
}

void BM_ConvReference(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  const int g = static_cast<int>(state.range(2)), s = static_cast<int>(state.range(3));
  const auto x = random_tensor({1, 60, 80, cin}, 1);
  const auto w = random_tensor({cout, 3, 3, cin / g}, 2);
  const ConvParams p{s, 1, g};
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_reference(x, w, {}, p));
}
BENCHMARK(BM_ConvReference)->Apply(conv_shape)->Unit(benchmark::kMillisecond);

void BM_ConvPacked(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  const int g = static_cast<int>(state.range(2)), s = static_cast<int>(state.range(3));
  const auto x = random_tensor({1, 60, 80, cin}, 1);
  const auto w = random_tensor({cout, 3, 3, cin / g}, 2);
  const PackedConv packed(w, {}, ConvParams{s, 1, g});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, packed, {0}));
}
BENCHMARK(BM_ConvPacked)->Apply(conv_shape)->Unit(benchmark::kMillisecond);

void BM_MaxPoolReference(benchmark::State& state) {
  const auto x = random_tensor({1, 120, 160, 64}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(max_pool2d_reference(x, 3, 2, 1));
}
BENCHMARK(BM_MaxPoolReference)->Unit(benchmark::kMillisecond);

void BM_MaxPool(benchmark::State& state) {
  const auto x = random_tensor({1, 120, 160, 64}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(max_pool2d(x, 3, 2, 1));
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMillisecond);

// whole detector at a modest input, reference kernels vs the fast path
void BM_Forward(benchmark::State& state) {
  const auto graph = netgraph::build_fdlite({});
  const executor::Network net(graph, executor::init_weights(graph, 1));
  const auto x = random_tensor({1, 256, 320, 3}, 4);
  executor::ForwardOptions opts;
  opts.reference_kernels = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(net.run(x, opts));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

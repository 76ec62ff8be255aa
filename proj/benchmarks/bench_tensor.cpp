// benchmarks/bench_tensor.cpp

#include <benchmark/benchmark.h>

#include "ctcbridge/layers.hpp"
#include "ctcbridge/tensor.hpp"

using namespace ctcbridge;

static nn::Tensor random_tensor(nn::Shape shape, RngState& rng) {
  std::vector<double> data(nn::shape_numel(shape));
  for (auto& x : data) x = rng.normal();
  return nn::Tensor::from_data(std::move(shape), std::move(data));
}

static void MatmulForward(benchmark::State& state) {
  RngState rng(1);
  auto n = static_cast<std::size_t>(state.range(0));
  nn::Tensor a = random_tensor({n, n}, rng);
  nn::Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    auto c = nn::matmul(a, b);
    benchmark::DoNotOptimize(c);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(MatmulForward)->RangeMultiplier(2)->Range(16, 128)->Complexity();

static void EncoderForwardBackward(benchmark::State& state) {
  RngState rng(2);
  nn::ParamStore store;
  nn::TransformerEncoder enc(store, "enc", 2, 32, 4, 64, rng);
  auto t = static_cast<std::size_t>(state.range(0));
  nn::Tensor x = random_tensor({t, 32}, rng);
  RngState drop(0);
  for (auto _ : state) {
    store.zero_grad();
    nn::Tensor y = enc(x, 0.0, drop, false);
    nn::backward(nn::mean(nn::mul(y, y)));
    benchmark::DoNotOptimize(y);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(EncoderForwardBackward)->RangeMultiplier(2)->Range(8, 64)->Complexity();

BENCHMARK_MAIN();

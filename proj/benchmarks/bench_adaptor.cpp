// benchmarks/bench_adaptor.cpp

#include <benchmark/benchmark.h>

#include "ctcbridge/adaptor.hpp"

using namespace ctcbridge;

static void AdaptorTrainStep(benchmark::State& state) {
  RngState rng(3);
  nn::ParamStore store;
  adaptor::AdaptorConfig cfg;
  cfg.upsample = 5;
  cfg.layers = 4;
  cfg.model_dim = 32;
  cfg.heads = 4;
  cfg.ffn_dim = 64;
  cfg.dropout = 0.0;
  adaptor::VocabAdaptor ad(store, "adaptor", cfg, 12, rng);
  auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> data(n * 32);
  for (auto& x : data) x = rng.normal();
  nn::Tensor hw = nn::Tensor::param({n, 32}, std::move(data));
  std::vector<int> target;
  for (std::size_t i = 0; i < 2 * n; ++i)
    target.push_back(static_cast<int>(i % 12));
  RngState drop(0);
  for (auto _ : state) {
    store.zero_grad();
    auto out = ad.adapt_train(hw, target, drop, false);
    nn::backward(out.ctc_loss);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(AdaptorTrainStep)->RangeMultiplier(2)->Range(2, 8);

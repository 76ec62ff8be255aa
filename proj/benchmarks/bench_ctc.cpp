// benchmarks/bench_ctc.cpp

#include <benchmark/benchmark.h>

#include "ctcbridge/ctc.hpp"

using namespace ctcbridge;

static nn::Tensor random_log_probs(std::size_t frames, std::size_t classes,
                                   RngState& rng) {
  std::vector<double> data(frames * classes);
  for (auto& x : data) x = rng.normal();
  return nn::log_softmax_rows(
      nn::Tensor::param({frames, classes}, std::move(data)));
}

static void CtcForward(benchmark::State& state) {
  RngState rng(1);
  auto frames = static_cast<std::size_t>(state.range(0));
  nn::Tensor lp = random_log_probs(frames, 13, rng);
  std::vector<int> target;
  for (std::size_t i = 0; i < frames / 5; ++i)
    target.push_back(static_cast<int>(i % 12));
  for (auto _ : state) {
    auto loss = ctc::ctc_loss(lp, target);
    benchmark::DoNotOptimize(loss);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(CtcForward)->RangeMultiplier(2)->Range(10, 80)->Complexity();

static void CtcViterbi(benchmark::State& state) {
  RngState rng(2);
  auto frames = static_cast<std::size_t>(state.range(0));
  nn::Tensor lp = random_log_probs(frames, 13, rng);
  std::vector<int> target;
  for (std::size_t i = 0; i < frames / 5; ++i)
    target.push_back(static_cast<int>(i % 12));
  for (auto _ : state) {
    auto path = ctc::viterbi_forced_align(lp, target);
    benchmark::DoNotOptimize(path);
  }
}
BENCHMARK(CtcViterbi)->RangeMultiplier(2)->Range(10, 80);

// tests/test_align.cpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ctcbridge/align.hpp"
#include "testutil.hpp"

using namespace ctcbridge;
using align::AlignConfig;
using align::EncoderPair;
using nn::Tensor;

TEST_CASE("mse of an identical pair is zero") {
  RngState rng(1);
  Tensor c = testutil::random_tensor({4, 6}, rng, 1.0, false);
  CHECK(align::mse_loss({c, c}).item() == doctest::Approx(0.0));
}

TEST_CASE("mse sums squared L2 distances over positions") {
  Tensor a = Tensor::from_data({1, 2}, {3.0, 4.0});
  Tensor b = Tensor::zeros({1, 2});
  CHECK(align::mse_loss({a, b}).item() == doctest::Approx(25.0));
}

TEST_CASE("mse rejects mismatched shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 3});
  CHECK_THROWS_AS(align::mse_loss({a, b}), ContractViolation);
}

TEST_CASE("contrastive loss is zero for a single position") {
  RngState rng(2);
  AlignConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    EncoderPair pair{testutil::random_tensor({1, 5}, rng, 2.0, false),
                     testutil::random_tensor({1, 5}, rng, 2.0, false)};
    CHECK(align::contrastive_loss(pair, cfg).item() ==
          doctest::Approx(0.0));
  }
}

TEST_CASE("contrastive loss matches the hand-evaluated two-position case") {
  // c^H_i == c^E_i; the two positions sit at L1 distance D from each other.
  double d = 3.0;
  Tensor ch = Tensor::from_data({2, 1}, {0.0, d});
  Tensor ce = Tensor::from_data({2, 1}, {0.0, d});
  AlignConfig cfg;
  cfg.tau = 0.1;
  double expected = -2.0 * std::log(1.0 / (1.0 + std::exp(-d / cfg.tau)));
  CHECK(align::contrastive_loss({ch, ce}, cfg).item() ==
        doctest::Approx(expected).epsilon(1e-12));

  // The loss vanishes as the positions separate.
  Tensor far_ch = Tensor::from_data({2, 1}, {0.0, 1e4});
  Tensor far_ce = Tensor::from_data({2, 1}, {0.0, 1e4});
  CHECK(align::contrastive_loss({far_ch, far_ce}, cfg).item() ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("contrastive loss is symmetric and nonnegative") {
  RngState rng(3);
  for (auto kind : {nn::Similarity::kNegL1, nn::Similarity::kNegL2Squared,
                    nn::Similarity::kDot}) {
    AlignConfig cfg;
    cfg.similarity = kind;
    for (int trial = 0; trial < 20; ++trial) {
      Tensor ch = testutil::random_tensor({3, 4}, rng, 1.0, false);
      Tensor ce = testutil::random_tensor({3, 4}, rng, 1.0, false);
      double fwd = align::contrastive_loss({ch, ce}, cfg).item();
      double swapped = align::contrastive_loss({ce, ch}, cfg).item();
      CHECK(fwd == doctest::Approx(swapped).epsilon(1e-10));
      CHECK(fwd >= -1e-12);
    }
  }
}

TEST_CASE("alignment losses match finite differences") {
  RngState rng(4);
  for (auto kind : {nn::Similarity::kNegL1, nn::Similarity::kNegL2Squared,
                    nn::Similarity::kDot}) {
    AlignConfig cfg;
    cfg.similarity = kind;
    Tensor ch = testutil::random_tensor({3, 5}, rng);
    Tensor ce = testutil::random_tensor({3, 5}, rng);
    auto build = [&] { return align::align_loss({ch, ce}, cfg); };
    auto report = testutil::check_gradients(build, {ch, ce});
    CHECK(report.max_err < 1e-4);
  }
}

TEST_CASE("align loss composes its enabled parts") {
  RngState rng(5);
  AlignConfig cfg;
  Tensor ch = testutil::random_tensor({4, 3}, rng, 1.0, false);
  Tensor ce = testutil::random_tensor({4, 3}, rng, 1.0, false);
  EncoderPair pair{ch, ce};

  AlignConfig off = cfg;
  off.use_mse = off.use_ctr = false;
  CHECK(align::align_loss(pair, off).item() == 0.0);

  // Identical pair: MSE is exactly zero; the contrastive term decays like
  // exp(-distance/tau) and is zero only in the separated limit.
  CHECK(std::abs(align::align_loss({ch, ch}, cfg).item()) < 1e-6);

  double total = align::align_loss(pair, cfg).item();
  double parts = align::mse_loss(pair).item() +
                 align::contrastive_loss(pair, cfg).item();
  CHECK(total == doctest::Approx(parts).epsilon(1e-12));

  AlignConfig mse_only = cfg;
  mse_only.use_ctr = false;
  CHECK(align::align_loss(pair, mse_only).item() ==
        doctest::Approx(align::mse_loss(pair).item()));
}

TEST_CASE("detached teacher receives no gradient") {
  RngState rng(6);
  AlignConfig cfg;
  cfg.detach_teacher = true;
  Tensor ch = testutil::random_tensor({3, 4}, rng);
  Tensor ce = testutil::random_tensor({3, 4}, rng);
  nn::backward(align::contrastive_loss({ch, ce}, cfg));
  CHECK_THROWS_AS(ce.grad(), ContractViolation);  // never populated
}

TEST_CASE("alignment metric") {
  Tensor a = Tensor::from_data({1, 2}, {1.0, -1.0});
  Tensor b = Tensor::zeros({1, 2});
  std::vector<EncoderPair> pairs = {{a, b}};
  CHECK(align::alignment_metric(pairs) == doctest::Approx(2.0));

  std::vector<EncoderPair> same = {{a, a}};
  CHECK(align::alignment_metric(same) == doctest::Approx(0.0));

  // Monotone under interpolation toward the target.
  RngState rng(7);
  Tensor ch = testutil::random_tensor({4, 5}, rng, 1.0, false);
  Tensor ce = testutil::random_tensor({4, 5}, rng, 1.0, false);
  double prev = -1.0;
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    std::vector<double> mixed(ch.size());
    for (std::size_t i = 0; i < ch.size(); ++i)
      mixed[i] = (1 - alpha) * ch.at(i) + alpha * ce.at(i);
    std::vector<EncoderPair> p = {
        {Tensor::from_data({4, 5}, std::move(mixed)), ce}};
    double metric = align::alignment_metric(p);
    if (prev >= 0.0) CHECK(metric <= prev + 1e-12);
    prev = metric;
  }
}

TEST_CASE("uniformity metric") {
  Tensor a = Tensor::from_data({2, 1}, {0.0, 0.0});
  std::vector<EncoderPair> identical = {{a, a}};
  CHECK(align::uniformity_metric(identical) == doctest::Approx(0.0));

  Tensor spread = Tensor::from_data({2, 1}, {0.0, 5.0});
  std::vector<EncoderPair> pairs = {{spread, spread}};
  CHECK(align::uniformity_metric(pairs) < 0.0);

  // Cross distances 0 and huge: mean of (1, 0) -> log(0.5).
  Tensor ch = Tensor::from_data({2, 1}, {0.0, 1e9});
  Tensor ce = Tensor::from_data({2, 1}, {1e9, 1e9});
  // Cross pairs: (ch_0, ce_1) distance 1e9, (ch_1, ce_0) distance 0.
  std::vector<EncoderPair> mixed = {{ch, ce}};
  CHECK(align::uniformity_metric(mixed) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("temperature must be positive") {
  AlignConfig cfg;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
}

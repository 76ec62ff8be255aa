// tests/test_adaptor.cpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ctcbridge/adaptor.hpp"
#include "testutil.hpp"

using namespace ctcbridge;
using adaptor::AdaptorConfig;
using adaptor::SegmentSpan;
using nn::Tensor;

namespace {

AdaptorConfig small_config() {
  AdaptorConfig cfg;
  cfg.upsample = 3;
  cfg.layers = 2;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 16;
  cfg.dropout = 0.0;
  return cfg;
}

Tensor log_probs_from_rows(const std::vector<std::vector<double>>& rows) {
  std::size_t n = rows[0].size();
  std::vector<double> data;
  for (const auto& row : rows)
    for (double p : row) data.push_back(std::log(p));
  return Tensor::from_data({rows.size(), n}, std::move(data));
}

}  // namespace

TEST_CASE("upsample repeats each row in place") {
  Tensor h = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor once = adaptor::upsample(h, 1);
  CHECK(once.shape() == nn::Shape{2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(once.at(i) == h.at(i));

  Tensor twice = adaptor::upsample(h, 2);
  CHECK(twice.shape() == nn::Shape{4, 2});
  CHECK(twice.at(0, 0) == 1);
  CHECK(twice.at(1, 0) == 1);
  CHECK(twice.at(2, 0) == 3);
  CHECK(twice.at(3, 0) == 3);

  CHECK_THROWS_AS(adaptor::upsample(h, 0), ContractViolation);
}

TEST_CASE("upsample gradient is the repeat count") {
  RngState rng(1);
  Tensor h = testutil::random_tensor({3, 4}, rng);
  nn::backward(nn::sum(adaptor::upsample(h, 5)));
  for (double g : h.grad()) CHECK(g == doctest::Approx(5.0));
}

TEST_CASE("encoder with zeroed output projections is the identity path") {
  RngState rng(2);
  nn::ParamStore store;
  AdaptorConfig cfg = small_config();
  adaptor::VocabAdaptor ad(store, "adaptor", cfg, 4, rng);
  // Zero every residual-branch output: attention o-proj and ffn w2.
  for (const auto& [name, t] : store.params()) {
    if (name.find(".o.") != std::string::npos ||
        name.find(".w2.") != std::string::npos) {
      t.impl()->value.assign(t.size(), 0.0);
    }
  }
  Tensor x = testutil::random_tensor({6, 8}, rng, 1.0, false);
  RngState drop(0);
  Tensor out = ad.encode(x, drop, false);
  Tensor expected = nn::add(x, nn::pos_encoding(6, 8));
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.at(i) == doctest::Approx(expected.at(i)).epsilon(1e-12));
}

TEST_CASE("projection with zero weights is uniform and normalized") {
  RngState rng(3);
  nn::ParamStore store;
  adaptor::VocabAdaptor ad(store, "adaptor", small_config(), 4, rng);
  store.get("adaptor.proj.w").impl()->value.assign(8 * 5, 0.0);
  store.get("adaptor.proj.b").impl()->value.assign(5, 0.0);
  Tensor frames = testutil::random_tensor({7, 8}, rng, 1.0, false);
  Tensor lp = ad.project(frames);
  for (std::size_t i = 0; i < lp.size(); ++i)
    CHECK(lp.at(i) == doctest::Approx(-std::log(5.0)).epsilon(1e-12));

  // Rows log-sum-exp to zero regardless of weights.
  adaptor::VocabAdaptor ad2(store, "adaptor2", small_config(), 4, rng);
  Tensor lp2 = ad2.project(frames);
  for (std::size_t i = 0; i < lp2.rows(); ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < lp2.cols(); ++j) z += std::exp(lp2.at(i, j));
    CHECK(std::abs(z - 1.0) < 1e-12);
  }
}

TEST_CASE("segments of the worked collapse example") {
  // a a b eps eps b b c
  int eps = 3;
  std::vector<int> path = {0, 0, 1, eps, eps, 1, 1, 2};
  auto spans = adaptor::segments_from_path(path, eps);
  REQUIRE(spans.size() == 4);
  CHECK((spans[0].token == 0 && spans[0].l == 0 && spans[0].r == 1));
  CHECK((spans[1].token == 1 && spans[1].l == 2 && spans[1].r == 2));
  CHECK((spans[2].token == 1 && spans[2].l == 5 && spans[2].r == 6));
  CHECK((spans[3].token == 2 && spans[3].l == 7 && spans[3].r == 7));

  CHECK(adaptor::segments_from_path({eps, eps}, eps).empty());
}

TEST_CASE("forced-alignment segments cover the target in order") {
  RngState rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> target(1 + rng.uniform_int(4));
    for (auto& t : target) t = static_cast<int>(rng.uniform_int(3));
    std::size_t frames = ctc::min_feasible_frames(target) +
                         rng.uniform_int(5);
    Tensor lp = testutil::random_log_probs(frames, 4, rng);
    auto path = ctc::viterbi_forced_align(lp, target);
    auto spans = adaptor::segments_from_path(path.labels, 3);
    REQUIRE(spans.size() == target.size());
    for (std::size_t i = 0; i < spans.size(); ++i)
      CHECK(spans[i].token == target[i]);
  }
}

TEST_CASE("single-frame segments pass the frame through") {
  Tensor frames = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor lp = log_probs_from_rows(
      {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}});
  auto merged = adaptor::merge_segments(frames, {{0, 1, 1}}, lp);
  CHECK(merged.shape() == nn::Shape{1, 2});
  CHECK(merged.at(0, 0) == doctest::Approx(3.0));
  CHECK(merged.at(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("equal confidences merge with equal weights") {
  Tensor frames = Tensor::from_data({2, 2}, {1, 0, 3, 2});
  Tensor lp = log_probs_from_rows({{0.5, 0.5}, {0.5, 0.5}});
  auto merged = adaptor::merge_segments(frames, {{0, 0, 1}}, lp);
  CHECK(merged.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(merged.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("confidence weights follow the softmax of probabilities") {
  // Probabilities 0.9 and 0.1 for the segment token.
  Tensor frames = Tensor::from_data({2, 1}, {1.0, 0.0});
  Tensor lp = log_probs_from_rows({{0.9, 0.1}, {0.1, 0.9}});
  auto merged = adaptor::merge_segments(frames, {{0, 0, 1}}, lp);
  double w0 = std::exp(0.9) / (std::exp(0.9) + std::exp(0.1));
  CHECK(w0 == doctest::Approx(0.6899744811).epsilon(1e-9));
  CHECK(merged.at(0, 0) == doctest::Approx(w0).epsilon(1e-12));

  // Log-probability variant: softmax over log p instead.
  auto merged_lp = adaptor::merge_segments(frames, {{0, 0, 1}}, lp, true);
  double v0 = 0.9 / (0.9 + 0.1);
  CHECK(merged_lp.at(0, 0) == doctest::Approx(v0).epsilon(1e-12));
}

TEST_CASE("merge weights always sum to one") {
  RngState rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t frames_n = 4 + rng.uniform_int(8);
    Tensor frames = Tensor::full({frames_n, 3}, 1.0);
    Tensor lp = testutil::random_log_probs(frames_n, 4, rng);
    auto [tokens, path] = ctc::best_path_decode(lp);
    auto spans = adaptor::segments_from_path(path.labels, 3);
    auto merged = adaptor::merge_segments(frames, spans, lp);
    // With all-ones frames, each merged row equals the weight sum.
    for (std::size_t i = 0; i < merged.rows(); ++i)
      CHECK(std::abs(merged.at(i, 0) - 1.0) < 1e-12);
  }
}

TEST_CASE("train-mode adaptation yields exactly M rows on random instances") {
  RngState rng(6);
  nn::ParamStore store;
  AdaptorConfig cfg = small_config();
  adaptor::VocabAdaptor ad(store, "adaptor", cfg, 4, rng);
  RngState drop(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t n = 1 + rng.uniform_int(4);
    std::size_t max_m = static_cast<std::size_t>(cfg.upsample) * n;
    std::vector<int> target(1 + rng.uniform_int(std::min<std::size_t>(
                                max_m, 6)));
    for (auto& t : target) t = static_cast<int>(rng.uniform_int(4));
    if (ctc::min_feasible_frames(target) > max_m) continue;
    Tensor hw = testutil::random_tensor({n, 8}, rng, 1.0, false);
    auto result = ad.adapt_train(hw, target, drop, false);
    CHECK(result.hv.rows() == target.size());
    CHECK(std::isfinite(result.ctc_loss.item()));
    CHECK(vocab::collapse(result.path.labels, 4).ids == target);
  }
}

TEST_CASE("inference merge agrees with the decoded prediction length") {
  RngState rng(7);
  nn::ParamStore store;
  adaptor::VocabAdaptor ad(store, "adaptor", small_config(), 4, rng);
  RngState drop(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 1 + rng.uniform_int(4);
    Tensor hw = testutil::random_tensor({n, 8}, rng, 1.0, false);
    auto result = ad.adapt_infer(hw, drop);
    CHECK(result.hv.rows() == result.predicted.size());
    auto again = ad.adapt_infer(hw, drop);
    CHECK(again.predicted == result.predicted);
    for (std::size_t i = 0; i < result.hv.size(); ++i)
      CHECK(again.hv.at(i) == result.hv.at(i));
  }
}

TEST_CASE("an all-blank prediction yields an empty representation") {
  RngState rng(8);
  nn::ParamStore store;
  adaptor::VocabAdaptor ad(store, "adaptor", small_config(), 4, rng);
  // Bias the projection overwhelmingly toward blank.
  auto bias = store.get("adaptor.proj.b").impl();
  bias->value.assign(5, 0.0);
  bias->value[4] = 50.0;
  Tensor hw = testutil::random_tensor({2, 8}, rng, 0.1, false);
  RngState drop(3);
  auto result = ad.adapt_infer(hw, drop);
  CHECK(result.predicted.empty());
  CHECK(result.hv.rows() == 0);
}

TEST_CASE("gradients flow through the merge into encoder and projection") {
  RngState rng(9);
  nn::ParamStore store;
  AdaptorConfig cfg = small_config();
  cfg.layers = 1;
  adaptor::VocabAdaptor ad(store, "adaptor", cfg, 3, rng);
  Tensor hw = testutil::random_tensor({2, 8}, rng);
  std::vector<int> target = {0, 2, 1};
  RngState drop(0);
  auto build = [&] {
    auto result = ad.adapt_train(hw, target, drop, false);
    return nn::add(nn::sum(nn::mul(result.hv, result.hv)),
                   result.ctc_loss);
  };
  std::vector<Tensor> inputs = {hw};
  for (const auto& [name, t] : store.params()) inputs.push_back(t);
  RngState pick(10);
  auto report = testutil::check_gradients(build, inputs, 1e-5, 30, &pick);
  CHECK(report.max_err < 1e-4);
}

TEST_CASE("config validation") {
  AdaptorConfig bad = small_config();
  bad.model_dim = 10;
  bad.heads = 4;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = small_config();
  bad.upsample = 0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

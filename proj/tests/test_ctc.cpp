// tests/test_ctc.cpp
//
// The forward-algorithm loss is checked against brute-force enumeration
// over the collapse preimage, and forced alignment against the enumerated
// constrained argmax.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ctcbridge/ctc.hpp"
#include "ctcbridge/tensor.hpp"
#include "testutil.hpp"

using namespace ctcbridge;
using nn::Tensor;

namespace {

// Rows of explicit probabilities, stored as logs.
Tensor log_probs_from_rows(const std::vector<std::vector<double>>& rows) {
  std::size_t n = rows[0].size();
  std::vector<double> data;
  for (const auto& row : rows)
    for (double p : row) data.push_back(std::log(p));
  return Tensor::from_data({rows.size(), n}, std::move(data));
}

// One-hot-ish rows spelling out a path (probability ~1 on the path label).
Tensor near_one_hot(const std::vector<int>& path, std::size_t classes) {
  std::vector<double> data(path.size() * classes, -1e9);
  for (std::size_t t = 0; t < path.size(); ++t)
    data[t * classes + static_cast<std::size_t>(path[t])] = 0.0;
  return Tensor::from_data({path.size(), classes}, std::move(data));
}

std::vector<int> random_target(RngState& rng, int vsize,
                               std::size_t max_len) {
  std::vector<int> t(rng.uniform_int(max_len + 1));
  for (auto& x : t) x = static_cast<int>(rng.uniform_int(vsize));
  return t;
}

}  // namespace

TEST_CASE("single frame, single-token target") {
  Tensor lp = log_probs_from_rows({{0.6, 0.4}});
  double loss = ctc::ctc_loss(lp, {0}).item();
  CHECK(loss == doctest::Approx(-std::log(0.6)).epsilon(1e-12));
}

TEST_CASE("two uniform frames marginalize to 0.75") {
  Tensor lp = log_probs_from_rows({{0.5, 0.5}, {0.5, 0.5}});
  double loss = ctc::ctc_loss(lp, {0}).item();
  CHECK(loss == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(loss == doctest::Approx(0.2876820724517809).epsilon(1e-12));
}

TEST_CASE("empty target marginalizes over the all-blank path") {
  Tensor lp = log_probs_from_rows({{0.3, 0.7}, {0.2, 0.8}});
  double loss = ctc::ctc_loss(lp, {}).item();
  CHECK(loss == doctest::Approx(-std::log(0.7 * 0.8)).epsilon(1e-12));
}

TEST_CASE("forward algorithm equals brute force on random instances") {
  RngState rng(101);
  int instances = 0;
  double max_dev = 0.0;
  while (instances < 500) {
    int vsize = 1 + static_cast<int>(rng.uniform_int(3));
    std::size_t frames = 1 + rng.uniform_int(10);
    auto target = random_target(rng, vsize, 4);
    if (ctc::min_feasible_frames(target) > frames) continue;
    Tensor lp = testutil::random_log_probs(frames, vsize + 1, rng);
    double fwd = ctc::ctc_loss(lp, target).item();
    double bf = ctc::ctc_loss_bruteforce(lp, target);
    max_dev = std::max(max_dev, std::abs(fwd - bf));
    ++instances;
  }
  CHECK(max_dev < 1e-9);
}

TEST_CASE("brute force on an infeasible target is +inf") {
  RngState rng(102);
  Tensor lp = testutil::random_log_probs(2, 3, rng);
  CHECK(std::isinf(ctc::ctc_loss_bruteforce(lp, {0, 0})));
}

TEST_CASE("deterministic logits matching one alignment give zero loss") {
  Tensor lp = near_one_hot({0, 2, 1, 2}, 3);  // a eps b eps
  CHECK(ctc::ctc_loss(lp, {0, 1}).item() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("infeasible targets raise and name the minimum frame count") {
  RngState rng(103);
  Tensor lp = testutil::random_log_probs(2, 3, rng);
  CHECK(ctc::min_feasible_frames({0, 0, 1}) == 4);
  try {
    ctc::ctc_loss(lp, {0, 0, 1});
    FAIL("expected InfeasibleTarget");
  } catch (const InfeasibleTarget& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
  CHECK_THROWS_AS(ctc::viterbi_forced_align(lp, {0, 1, 0}),
                  InfeasibleTarget);
}

TEST_CASE("forced alignment on one-hot logits recovers the planted path") {
  std::vector<int> planted = {2, 0, 0, 2, 1, 1};
  Tensor lp = near_one_hot(planted, 3);
  auto path = ctc::viterbi_forced_align(lp, {0, 1});
  CHECK(path.labels == planted);
  CHECK(path.log_prob == doctest::Approx(0.0));
}

TEST_CASE("forced alignment picks aa over blank variants at p=0.6") {
  Tensor lp = log_probs_from_rows({{0.6, 0.4}, {0.6, 0.4}});
  auto path = ctc::viterbi_forced_align(lp, {0});
  CHECK(path.labels == std::vector<int>{0, 0});
  CHECK(path.log_prob == doctest::Approx(2.0 * std::log(0.6)).epsilon(1e-12));
}

TEST_CASE("forced alignment equals the enumerated constrained argmax") {
  RngState rng(104);
  int instances = 0;
  while (instances < 200) {
    int vsize = 1 + static_cast<int>(rng.uniform_int(3));
    std::size_t frames = 1 + rng.uniform_int(9);
    auto target = random_target(rng, vsize, 4);
    if (target.empty() || ctc::min_feasible_frames(target) > frames)
      continue;
    Tensor lp = testutil::random_log_probs(frames, vsize + 1, rng);
    auto path = ctc::viterbi_forced_align(lp, target);

    CHECK(vocab::collapse(path.labels, vsize).ids == target);

    // Path score must equal its per-frame sum.
    double score = 0.0;
    for (std::size_t t = 0; t < frames; ++t)
      score += lp.at(t, static_cast<std::size_t>(path.labels[t]));
    CHECK(path.log_prob == doctest::Approx(score).epsilon(1e-12));

    auto all = vocab::enumerate_inverse_collapse(target, frames, vsize);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> best_path;
    for (const auto& cand : all) {
      double s = 0.0;
      for (std::size_t t = 0; t < frames; ++t)
        s += lp.at(t, static_cast<std::size_t>(cand[t]));
      if (s > best) {
        best = s;
        best_path = cand;
      }
    }
    CHECK(path.log_prob == doctest::Approx(best).epsilon(1e-9));
    CHECK(path.labels == best_path);

    // Single path probability is bounded by the marginal.
    double loss = ctc::ctc_loss(lp, target).item();
    CHECK(path.log_prob <= -loss + 1e-12);
    if (all.size() > 1) CHECK(path.log_prob < -loss);
    ++instances;
  }
}

TEST_CASE("raising log-probs along the forced path never lowers its score") {
  RngState rng(105);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t frames = 3 + rng.uniform_int(5);
    std::vector<int> target = {0, 1};
    Tensor logits = testutil::random_tensor({frames, 3}, rng, 1.5, false);
    Tensor lp = nn::log_softmax_rows(logits);
    auto path = ctc::viterbi_forced_align(lp, target);

    auto path_prob = [&](const Tensor& normalized) {
      double s = 0.0;
      for (std::size_t t = 0; t < frames; ++t)
        s += normalized.at(t, static_cast<std::size_t>(path.labels[t]));
      return s;
    };
    double before = path_prob(lp);

    std::vector<double> bumped(logits.value().begin(),
                               logits.value().end());
    for (std::size_t t = 0; t < frames; ++t)
      bumped[t * 3 + static_cast<std::size_t>(path.labels[t])] += 0.5;
    Tensor lp2 = nn::log_softmax_rows(Tensor::from_data({frames, 3},
                                                        std::move(bumped)));
    CHECK(path_prob(lp2) >= before - 1e-12);
  }
}

TEST_CASE("ctc loss gradient matches finite differences") {
  RngState rng(106);
  for (int trial = 0; trial < 20; ++trial) {
    int vsize = 1 + static_cast<int>(rng.uniform_int(3));
    std::size_t frames = 2 + rng.uniform_int(5);
    auto target = random_target(rng, vsize, 3);
    if (ctc::min_feasible_frames(target) > frames) continue;
    Tensor logits = testutil::random_tensor(
        {frames, static_cast<std::size_t>(vsize) + 1}, rng, 1.2);
    auto build = [&] {
      return ctc::ctc_loss(nn::log_softmax_rows(logits), target);
    };
    auto report = testutil::check_gradients(build, {logits});
    CHECK(report.max_err < 1e-4);
  }
}

TEST_CASE("best path decode") {
  Tensor all_blank = near_one_hot({2, 2, 2}, 3);
  auto [empty_tokens, empty_path] = ctc::best_path_decode(all_blank);
  CHECK(empty_tokens.ids.empty());
  CHECK(empty_path.labels == std::vector<int>{2, 2, 2});

  Tensor seq = near_one_hot({0, 0, 2, 1}, 3);
  auto [tokens, path] = ctc::best_path_decode(seq);
  CHECK(tokens.ids == std::vector<int>{0, 1});

  // Round trip: decode of one-hot forced-alignment logits.
  RngState rng(107);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> target = random_target(rng, 3, 4);
    std::size_t frames = ctc::min_feasible_frames(target) + rng.uniform_int(4);
    if (frames == 0) continue;
    Tensor lp = testutil::random_log_probs(frames, 4, rng);
    auto forced = ctc::viterbi_forced_align(lp, target);
    auto [decoded, dpath] = ctc::best_path_decode(near_one_hot(forced.labels, 4));
    CHECK(decoded.ids == target);
  }
}

// tests/test_nnkit.cpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ctcbridge/layers.hpp"
#include "ctcbridge/tensor.hpp"
#include "testutil.hpp"

using namespace ctcbridge;
using nn::Tensor;

TEST_CASE("softmax of a constant row is uniform") {
  Tensor x = Tensor::zeros({1, 3});
  Tensor y = nn::softmax_rows(x);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(y.at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one within 1e-12") {
  RngState rng(7);
  Tensor x = testutil::random_tensor({20, 9}, rng, 4.0);
  Tensor y = nn::softmax_rows(x);
  for (std::size_t i = 0; i < 20; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 9; ++j) s += y.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("layer norm of a constant vector is zero before rescale") {
  Tensor x = Tensor::full({2, 8}, 3.25);
  Tensor gamma = Tensor::full({8}, 1.0);
  Tensor beta = Tensor::zeros({8});
  Tensor y = nn::layer_norm(x, gamma, beta);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::abs(y.at(i)) < 1e-9);
}

TEST_CASE("matmul identity") {
  RngState rng(3);
  Tensor x = testutil::random_tensor({3, 5}, rng);
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  Tensor y = nn::matmul(Tensor::from_data({3, 3}, eye), x);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(y.at(i) == doctest::Approx(x.at(i)).epsilon(1e-15));
}

TEST_CASE("shape mismatch raises with both shapes in the message") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  try {
    nn::add(a, b);
    FAIL("expected ContractViolation");
  } catch (const ContractViolation& e) {
    std::string msg = e.what();
    CHECK(msg.find("(2, 3)") != std::string::npos);
    CHECK(msg.find("(3, 2)") != std::string::npos);
  }
  CHECK_THROWS_AS(nn::matmul(a, a), ContractViolation);
}

TEST_CASE("positional encoding closed form") {
  Tensor pe = nn::pos_encoding(4, 6);
  // p = 0: sin 0 on even dims, cos 0 on odd dims.
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pe.at(0, 2 * i) == doctest::Approx(0.0));
    CHECK(pe.at(0, 2 * i + 1) == doctest::Approx(1.0));
  }
  // p = 1, i = 0.
  CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(pe.at(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-12));
  CHECK(pe.at(1, 0) == doctest::Approx(0.8415).epsilon(1e-4));
  CHECK(pe.at(1, 1) == doctest::Approx(0.5403).epsilon(1e-4));
  for (std::size_t i = 0; i < pe.size(); ++i) {
    CHECK(pe.at(i) >= -1.0);
    CHECK(pe.at(i) <= 1.0);
  }
  CHECK_THROWS_AS(nn::pos_encoding(4, 5), ContractViolation);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  RngState rng(11);
  Tensor x = testutil::random_tensor({4, 3}, rng);
  nn::backward(nn::sum(x));
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of squared norm gives 2x") {
  RngState rng(12);
  Tensor x = testutil::random_tensor({5}, rng);
  nn::backward(nn::sum(nn::mul(x, x)));
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.at(i)).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::param({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(nn::backward(nn::mul(x, x)), ContractViolation);
}

TEST_CASE("elementwise primitives match finite differences") {
  RngState rng(21);
  Tensor x = testutil::random_tensor({3, 4}, rng);
  Tensor y = testutil::random_tensor({3, 4}, rng);
  auto build = [&] {
    Tensor h = nn::gelu(nn::mul(nn::add(x, y), nn::sub(x, y)));
    h = nn::add(nn::abs(h), nn::exp(nn::scale(h, 0.3)));
    return nn::mean(h);
  };
  auto report = testutil::check_gradients(build, {x, y});
  CHECK(report.max_err < 1e-4);
}

TEST_CASE("matmul, affine, transpose, layer norm match finite differences") {
  RngState rng(22);
  Tensor x = testutil::random_tensor({4, 6}, rng);
  Tensor w = testutil::random_tensor({6, 5}, rng);
  Tensor b = testutil::random_tensor({5}, rng);
  Tensor gamma = testutil::random_tensor({5}, rng, 0.5);
  Tensor beta = testutil::random_tensor({5}, rng, 0.5);
  auto build = [&] {
    Tensor h = nn::affine(x, w, b);
    h = nn::layer_norm(h, gamma, beta);
    h = nn::matmul(h, nn::transpose(h));
    return nn::mean(nn::mul(h, h));
  };
  auto report = testutil::check_gradients(build, {x, w, b, gamma, beta});
  CHECK(report.max_err < 1e-4);
}

TEST_CASE("softmax and log-softmax match finite differences") {
  RngState rng(23);
  Tensor x = testutil::random_tensor({5, 7}, rng, 2.0);
  Tensor weights = testutil::random_tensor({5, 7}, rng);
  auto build = [&] {
    Tensor a = nn::mul(nn::softmax_rows(x), weights);
    Tensor b = nn::mul(nn::log_softmax_rows(x), weights);
    return nn::sum(nn::add(a, b));
  };
  auto report = testutil::check_gradients(build, {x, weights});
  CHECK(report.max_err < 1e-4);
}

TEST_CASE("row and column manipulation match finite differences") {
  RngState rng(24);
  Tensor x = testutil::random_tensor({6, 4}, rng);
  auto build = [&] {
    Tensor a = nn::slice_rows(x, 1, 5);
    Tensor b = nn::slice_cols(a, 1, 3);
    Tensor c = nn::concat_cols({b, b});
    Tensor d = nn::concat_rows({c, c});
    Tensor e = nn::repeat_rows(d, std::vector<int>(d.rows(), 2));
    Tensor f = nn::rows_gather(e, std::vector<int>(e.rows(), 1));
    return nn::add(nn::sum(nn::mul(f, f)),
                   nn::sum(nn::diagonal(nn::matmul(d, nn::transpose(d)))));
  };
  auto report = testutil::check_gradients(build, {x});
  CHECK(report.max_err < 1e-4);
}

TEST_CASE("embedding lookup matches finite differences and scatters") {
  RngState rng(25);
  Tensor table = testutil::random_tensor({7, 3}, rng);
  std::vector<int> ids = {2, 2, 5, 0};
  auto build = [&] {
    Tensor e = nn::embedding(table, ids);
    return nn::sum(nn::mul(e, e));
  };
  auto report = testutil::check_gradients(build, {table});
  CHECK(report.max_err < 1e-4);
  CHECK_THROWS_AS(nn::embedding(table, {7}), ContractViolation);
}

TEST_CASE("dropout: eval identity, train scales kept entries") {
  RngState rng(31);
  Tensor x = Tensor::full({100, 10}, 1.0);
  Tensor eval = nn::dropout(x, 0.3, rng, false);
  CHECK(eval.impl() == x.impl());
  Tensor train = nn::dropout(x, 0.3, rng, true);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.at(i) != 0.0) {
      ++kept;
      CHECK(train.at(i) == doctest::Approx(1.0 / 0.7));
    }
  }
  CHECK(kept > 550);
  CHECK(kept < 850);
  CHECK_THROWS_AS(nn::dropout(x, 1.0, rng, true), ContractViolation);
}

TEST_CASE("transformer encoder preserves shape and is deterministic in eval") {
  RngState rng(41);
  nn::ParamStore store;
  nn::TransformerEncoder enc(store, "enc", 2, 16, 4, 32, rng);
  RngState drop(5);
  Tensor x = testutil::random_tensor({7, 16}, rng, 1.0, false);
  Tensor y1 = enc(x, 0.3, drop, false);
  Tensor y2 = enc(x, 0.3, drop, false);
  CHECK(y1.shape() == nn::Shape{7, 16});
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1.at(i) == y2.at(i));

  // Single-position input: attention over one key is still well-defined.
  Tensor single = testutil::random_tensor({1, 16}, rng, 1.0, false);
  Tensor ys = enc(single, 0.0, drop, false);
  CHECK(ys.shape() == nn::Shape{1, 16});
  for (std::size_t i = 0; i < ys.size(); ++i)
    CHECK(std::isfinite(ys.at(i)));

  CHECK_THROWS_AS(nn::MultiHeadAttention(store, "bad", 10, 3, rng),
                  ContractViolation);
}

TEST_CASE("transformer encoder matches finite differences") {
  RngState rng(42);
  nn::ParamStore store;
  nn::TransformerEncoder enc(store, "enc", 1, 8, 2, 12, rng);
  Tensor x = testutil::random_tensor({3, 8}, rng);
  RngState drop(0);
  auto build = [&] {
    Tensor y = enc(x, 0.0, drop, false);
    return nn::mean(nn::mul(y, y));
  };
  std::vector<Tensor> inputs = {x};
  for (const auto& [name, t] : store.params()) inputs.push_back(t);
  RngState pick(43);
  auto report = testutil::check_gradients(build, inputs, 1e-5, 40, &pick);
  CHECK(report.max_err < 1e-4);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  RngState rng(51);
  nn::ParamStore store;
  Tensor w = store.create("w", {4}, [&rng] { return rng.normal(); });
  std::vector<double> before(w.value().begin(), w.value().end());
  store.zero_grad();
  store.adam_step(1e-2);
  CHECK(store.step_count() == 1);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.at(i) == before[i]);
}

TEST_CASE("adam single step matches the hand-computed update") {
  nn::ParamStore store;
  Tensor w = store.create("w", {3}, [] { return 0.5; });
  Tensor loss = nn::sum(nn::mul(Tensor::from_data({3}, {2.0, -1.0, 0.25}),
                                w));
  store.zero_grad();
  nn::backward(loss);
  double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> expected(3);
  std::vector<double> g = {2.0, -1.0, 0.25};
  for (int i = 0; i < 3; ++i) {
    double m = (1 - b1) * g[i], v = (1 - b2) * g[i] * g[i];
    double mhat = m / (1 - b1), vhat = v / (1 - b2);
    expected[i] = 0.5 - lr * mhat / (std::sqrt(vhat) + eps);
  }
  store.adam_step(lr, b1, b2, eps);
  for (int i = 0; i < 3; ++i)
    CHECK(w.at(i) == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("adam requires gradients") {
  nn::ParamStore store;
  store.create("w", {2}, [] { return 0.0; });
  CHECK_THROWS_AS(store.adam_step(1e-3), ContractViolation);
}

TEST_CASE("training steps are deterministic for a fixed seed") {
  auto run = [] {
    RngState rng(99);
    nn::ParamStore store;
    nn::Linear lin(store, "lin", 4, 4, rng);
    RngState drop(1);
    for (int step = 0; step < 3; ++step) {
      Tensor x = testutil::random_tensor({5, 4}, drop, 1.0, false);
      Tensor y = nn::dropout(lin(x), 0.2, drop, true);
      store.zero_grad();
      nn::backward(nn::mean(nn::mul(y, y)));
      store.adam_step(1e-2);
    }
    return store.snapshot_values();
  };
  auto a = run();
  auto b = run();
  CHECK(a == b);
}

TEST_CASE("unreachable parameters receive zero gradients") {
  RngState rng(61);
  nn::ParamStore store;
  nn::Linear used(store, "used", 3, 3, rng);
  nn::Linear unused(store, "unused", 3, 3, rng);
  Tensor x = testutil::random_tensor({2, 3}, rng, 1.0, false);
  store.zero_grad();
  nn::backward(nn::sum(used(x)));
  for (double g : unused.w.grad()) CHECK(g == 0.0);
  bool any = false;
  for (double g : used.w.grad()) any = any || g != 0.0;
  CHECK(any);
}

TEST_CASE("checkpoint round trip is exact and header is JSON") {
  namespace fs = std::filesystem;
  RngState rng(71);
  nn::ParamStore store;
  nn::Linear lin(store, "lin", 3, 2, rng);
  store.create("scalar", {1}, [&rng] { return rng.normal(); });
  fs::path path = fs::temp_directory_path() / "ctcbridge_ckpt_test.bin";
  store.save(path.string());

  auto tensors = nn::read_tensor_file(path.string());
  CHECK(tensors.size() == 3);
  CHECK(tensors[0].first == "lin.b");
  CHECK(tensors[1].first == "lin.w");
  CHECK(tensors[1].second.shape() == nn::Shape{3, 2});

  auto before = store.snapshot_values();
  for (auto& [name, t] : store.params())
    t.impl()->value.assign(t.size(), 0.0);
  store.load(path.string());
  CHECK(store.snapshot_values() == before);
  fs::remove(path);
}

TEST_CASE("detach blocks gradient flow") {
  RngState rng(81);
  Tensor x = testutil::random_tensor({3}, rng);
  Tensor y = nn::mul(x.detach(), x);
  nn::backward(nn::sum(y));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(x.at(i)));
}

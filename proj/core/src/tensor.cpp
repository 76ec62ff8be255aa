// core/src/tensor.cpp

#include "ctcbridge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>
#include <utility>

namespace ctcbridge::nn {

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(value);
  CTCB_CHECK(shape_numel(impl->shape) == impl->value.size(),
             "shape ", shape_str(impl->shape), " vs data length ",
             impl->value.size());
  return impl;
}

Tensor make_node(Shape shape, std::vector<double> value,
                 std::vector<Tensor> parents,
                 std::function<void(TensorImpl&)> backward_fn) {
  auto impl = make_impl(std::move(shape), std::move(value));
  bool needs = false;
  impl->parents.reserve(parents.size());
  for (const auto& p : parents) {
    impl->parents.push_back(p.impl());
    needs = needs || p.requires_grad();
  }
  impl->requires_grad = needs;
  if (needs) impl->backward_fn = std::move(backward_fn);
  return Tensor(impl);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractViolation(format_msg(op, ": shape mismatch ",
                                       shape_str(a.shape()), " vs ",
                                       shape_str(b.shape())));
  }
}

void check_2d(const Tensor& a, const char* op) {
  if (a.shape().size() != 2) {
    throw ContractViolation(
        format_msg(op, ": expected 2-D tensor, got ", shape_str(a.shape())));
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double fill) {
  std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, fill)));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  return Tensor(make_impl(std::move(shape), std::move(data)));
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  auto impl = make_impl(std::move(shape), std::move(data));
  impl->requires_grad = true;
  return Tensor(impl);
}

std::size_t Tensor::rows() const {
  check_2d(*this, "rows");
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  check_2d(*this, "cols");
  return impl_->shape[1];
}

double Tensor::item() const {
  CTCB_CHECK(is_scalar(), "item() on tensor of shape ", shape_str(shape()));
  return impl_->value[0];
}

std::span<const double> Tensor::grad() const {
  CTCB_CHECK(impl_->grad.size() == impl_->value.size(),
             "gradient not populated");
  return impl_->grad;
}

Tensor Tensor::detach() const {
  return Tensor(make_impl(impl_->shape, impl_->value));
}

void backward(const Tensor& loss) {
  CTCB_CHECK(loss.is_scalar(), "backward requires a scalar loss, got shape ",
             shape_str(loss.shape()));
  TensorImpl* root = loss.impl().get();
  root->ensure_grad();
  root->grad[0] += 1.0;

  // Iterative post-order DFS, then replay in reverse.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorImpl* parent = node->parents[idx++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn && node->requires_grad) node->backward_fn(*node);
  }
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_node(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    for (int side = 0; side < 2; ++side) {
      auto& p = self.parents[side];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make_node(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    for (int side = 0; side < 2; ++side) {
      auto& p = self.parents[side];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      double s = side == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += s * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make_node(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  return make_node(a.shape(), std::move(out), {a}, [c](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += c * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + c;
  return make_node(a.shape(), std::move(out), {a}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += self.grad[i];
  });
}

Tensor abs(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.at(i));
  return make_node(a.shape(), std::move(out), {a}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += sign(p->value[i]) * self.grad[i];
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.at(i));
  return make_node(a.shape(), std::move(out), {a}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += self.value[i] * self.grad[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.at(i));
  return make_node(a.shape(), std::move(out), {a}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += self.grad[i] / p->value[i];
  });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = a.at(i);
    out[i] = 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
  }
  return make_node(a.shape(), std::move(out), {a}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double x = p->value[i];
      double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      p->grad[i] += (cdf + x * pdf) * self.grad[i];
    }
  });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ContractViolation(format_msg("matmul: inner dims differ, ",
                                       shape_str(a.shape()), " vs ",
                                       shape_str(b.shape())));
  }
  std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const double* av = a.value().data();
  const double* bv = b.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t kk = 0; kk < k; ++kk) {
      double aik = av[i * k + kk];
      const double* brow = &bv[kk * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return make_node({m, n}, std::move(out), {a, b},
                   [m, k, n](TensorImpl& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const double* g = self.grad.data();
    if (pa->requires_grad) {
      pa->ensure_grad();  // dA = G . B^T
      const double* bv = pb->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          const double* grow = &g[i * n];
          const double* brow = &bv[kk * n];
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          pa->grad[i * k + kk] += acc;
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();  // dB = A^T . G
      const double* av = pa->value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g[i * n];
        for (std::size_t kk = 0; kk < k; ++kk) {
          double aik = av[i * k + kk];
          double* brow = &pb->grad[kk * n];
          for (std::size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
        }
      }
    }
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
  check_2d(x, "affine");
  check_2d(w, "affine");
  CTCB_CHECK(bias.shape().size() == 1, "affine: bias must be 1-D, got ",
             shape_str(bias.shape()));
  if (x.cols() != w.rows() || w.cols() != bias.shape()[0]) {
    throw ContractViolation(format_msg(
        "affine: shapes do not conform, x=", shape_str(x.shape()),
        " w=", shape_str(w.shape()), " bias=", shape_str(bias.shape())));
  }
  std::size_t t = x.rows(), k = x.cols(), n = w.cols();
  std::vector<double> out(t * n);
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  const double* bv = bias.value().data();
  for (std::size_t i = 0; i < t; ++i) {
    double* orow = &out[i * n];
    for (std::size_t j = 0; j < n; ++j) orow[j] = bv[j];
    for (std::size_t kk = 0; kk < k; ++kk) {
      double xik = xv[i * k + kk];
      const double* wrow = &wv[kk * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += xik * wrow[j];
    }
  }
  return make_node({t, n}, std::move(out), {x, w, bias},
                   [t, k, n](TensorImpl& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    const double* g = self.grad.data();
    if (px->requires_grad) {
      px->ensure_grad();
      const double* wv = pw->value.data();
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          const double* grow = &g[i * n];
          const double* wrow = &wv[kk * n];
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wrow[j];
          px->grad[i * k + kk] += acc;
        }
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      const double* xv = px->value.data();
      for (std::size_t i = 0; i < t; ++i) {
        const double* grow = &g[i * n];
        for (std::size_t kk = 0; kk < k; ++kk) {
          double xik = xv[i * k + kk];
          double* wrow = &pw->grad[kk * n];
          for (std::size_t j = 0; j < n; ++j) wrow[j] += xik * grow[j];
        }
      }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < n; ++j) pb->grad[j] += g[i * n + j];
    }
  });
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i, j);
  return make_node({n, m}, std::move(out), {a}, [m, n](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        p->grad[i * n + j] += self.grad[j * m + i];
  });
}

// ---- row-wise normalizations ----

Tensor softmax_rows(const Tensor& a) {
  check_2d(a, "softmax_rows");
  std::size_t t = a.rows(), n = a.cols();
  std::vector<double> out(t * n);
  for (std::size_t i = 0; i < t; ++i) {
    double mx = a.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(a.at(i, j) - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_node(a.shape(), std::move(out), {a}, [t, n](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < t; ++i) {
      const double* y = &self.value[i * n];
      const double* g = &self.grad[i * n];
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      double* px = &p->grad[i * n];
      for (std::size_t j = 0; j < n; ++j) px[j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  check_2d(a, "log_softmax_rows");
  std::size_t t = a.rows(), n = a.cols();
  std::vector<double> out(t * n);
  for (std::size_t i = 0; i < t; ++i) {
    double mx = a.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(a.at(i, j) - mx);
    double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.at(i, j) - lse;
  }
  return make_node(a.shape(), std::move(out), {a}, [t, n](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < t; ++i) {
      const double* y = &self.value[i * n];
      const double* g = &self.grad[i * n];
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[j];
      double* px = &p->grad[i * n];
      for (std::size_t j = 0; j < n; ++j) px[j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check_2d(x, "layer_norm");
  std::size_t t = x.rows(), n = x.cols();
  CTCB_CHECK(gamma.shape() == Shape{n} && beta.shape() == Shape{n},
             "layer_norm: gamma/beta must be (", n, ")");
  std::vector<double> out(t * n);
  std::vector<double> inv_std(t), xhat(t * n);
  for (std::size_t i = 0; i < t; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x.at(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      double xh = (x.at(i, j) - mu) * inv_std[i];
      xhat[i * n + j] = xh;
      out[i * n + j] = gamma.at(j) * xh + beta.at(j);
    }
  }
  return make_node(
      x.shape(), std::move(out), {x, gamma, beta},
      [t, n, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](TensorImpl& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        if (px->requires_grad) px->ensure_grad();
        for (std::size_t i = 0; i < t; ++i) {
          const double* g = &self.grad[i * n];
          const double* xh = &xhat[i * n];
          if (pg->requires_grad)
            for (std::size_t j = 0; j < n; ++j) pg->grad[j] += g[j] * xh[j];
          if (pb->requires_grad)
            for (std::size_t j = 0; j < n; ++j) pb->grad[j] += g[j];
          if (px->requires_grad) {
            double mean_gg = 0.0, mean_ggx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              double gg = g[j] * pg->value[j];
              mean_gg += gg;
              mean_ggx += gg * xh[j];
            }
            mean_gg /= static_cast<double>(n);
            mean_ggx /= static_cast<double>(n);
            double* dst = &px->grad[i * n];
            for (std::size_t j = 0; j < n; ++j) {
              double gg = g[j] * pg->value[j];
              dst[j] += (gg - mean_gg - xh[j] * mean_ggx) * inv_std[i];
            }
          }
        }
      });
}

// ---- lookup, dropout ----

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  check_2d(table, "embedding");
  std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CTCB_CHECK(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < v,
               "embedding id ", ids[i], " out of range [0, ", v, ")");
    std::copy_n(&table.value()[static_cast<std::size_t>(ids[i]) * d], d,
                &out[i * d]);
  }
  return make_node({ids.size(), d}, std::move(out), {table},
                   [ids, d](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = &p->grad[static_cast<std::size_t>(ids[i]) * d];
      const double* g = &self.grad[i * d];
      for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
    }
  });
}

Tensor dropout(const Tensor& a, double p, RngState& rng, bool train) {
  CTCB_CHECK(p >= 0.0 && p < 1.0, "dropout probability ", p,
             " outside [0, 1)");
  if (!train || p == 0.0) return a;
  double keep = 1.0 - p;
  std::vector<double> mask(a.size());
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() >= p ? 1.0 / keep : 0.0;
    out[i] = a.at(i) * mask[i];
  }
  return make_node(a.shape(), std::move(out), {a},
                   [mask = std::move(mask)](TensorImpl& self) {
    auto& pa = self.parents[0];
    pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += mask[i] * self.grad[i];
  });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
  return make_node({1}, {acc}, {a}, [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < p->grad.size(); ++i)
      p->grad[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  CTCB_CHECK(a.size() > 0, "mean of empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
  double inv = 1.0 / static_cast<double>(a.size());
  return make_node({1}, {acc * inv}, {a}, [inv](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < p->grad.size(); ++i)
      p->grad[i] += self.grad[0] * inv;
  });
}

// ---- row manipulation ----

Tensor concat_rows(const std::vector<Tensor>& parts) {
  CTCB_CHECK(!parts.empty(), "concat_rows of zero parts");
  std::size_t d = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_2d(p, "concat_rows");
    CTCB_CHECK(p.cols() == d, "concat_rows: column mismatch ", p.cols(),
               " vs ", d);
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const auto& p : parts)
    out.insert(out.end(), p.value().begin(), p.value().end());
  return make_node({total, d}, std::move(out), parts, [](TensorImpl& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      std::size_t n = p->value.size();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          p->grad[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  check_2d(a, "slice_rows");
  CTCB_CHECK(begin <= end && end <= a.rows(), "slice_rows [", begin, ", ",
             end, ") of ", a.rows(), " rows");
  std::size_t d = a.cols();
  std::vector<double> out(a.value().begin() + begin * d,
                          a.value().begin() + end * d);
  return make_node({end - begin, d}, std::move(out), {a},
                   [begin, d](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[begin * d + i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  CTCB_CHECK(!parts.empty(), "concat_cols of zero parts");
  std::size_t t = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_2d(p, "concat_cols");
    CTCB_CHECK(p.rows() == t, "concat_cols: row mismatch ", p.rows(), " vs ",
               t);
    total += p.cols();
  }
  std::vector<double> out(t * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::size_t d = p.cols();
    for (std::size_t i = 0; i < t; ++i)
      std::copy_n(&p.value()[i * d], d, &out[i * total + offset]);
    offset += d;
  }
  return make_node({t, total}, std::move(out), parts,
                   [t, total](TensorImpl& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      std::size_t d = p->value.size() / t;
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < t; ++i)
          for (std::size_t j = 0; j < d; ++j)
            p->grad[i * d + j] += self.grad[i * total + offset + j];
      }
      offset += d;
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  check_2d(a, "slice_cols");
  CTCB_CHECK(begin <= end && end <= a.cols(), "slice_cols [", begin, ", ",
             end, ") of ", a.cols(), " cols");
  std::size_t t = a.rows(), n = a.cols(), d = end - begin;
  std::vector<double> out(t * d);
  for (std::size_t i = 0; i < t; ++i)
    std::copy_n(&a.value()[i * n + begin], d, &out[i * d]);
  return make_node({t, d}, std::move(out), {a},
                   [begin, t, n, d](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < d; ++j)
        p->grad[i * n + begin + j] += self.grad[i * d + j];
  });
}

Tensor repeat_rows(const Tensor& a, const std::vector<int>& counts) {
  check_2d(a, "repeat_rows");
  CTCB_CHECK(counts.size() == a.rows(), "repeat_rows: ", counts.size(),
             " counts for ", a.rows(), " rows");
  std::size_t d = a.cols(), total = 0;
  for (int c : counts) {
    CTCB_CHECK(c >= 0, "repeat_rows: negative count");
    total += static_cast<std::size_t>(c);
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (int r = 0; r < counts[i]; ++r)
      out.insert(out.end(), a.value().begin() + i * d,
                 a.value().begin() + (i + 1) * d);
  return make_node({total, d}, std::move(out), {a},
                   [counts, d](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    std::size_t row = 0;
    for (std::size_t i = 0; i < counts.size(); ++i)
      for (int r = 0; r < counts[i]; ++r, ++row)
        for (std::size_t j = 0; j < d; ++j)
          p->grad[i * d + j] += self.grad[row * d + j];
  });
}

Tensor rows_gather(const Tensor& a, const std::vector<int>& cols) {
  check_2d(a, "rows_gather");
  CTCB_CHECK(cols.size() == a.rows(), "rows_gather: ", cols.size(),
             " indices for ", a.rows(), " rows");
  std::size_t n = a.cols();
  std::vector<double> out(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    CTCB_CHECK(cols[i] >= 0 && static_cast<std::size_t>(cols[i]) < n,
               "rows_gather: column ", cols[i], " out of range [0, ", n, ")");
    out[i] = a.at(i, static_cast<std::size_t>(cols[i]));
  }
  return make_node({cols.size()}, std::move(out), {a},
                   [cols, n](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < cols.size(); ++i)
      p->grad[i * n + static_cast<std::size_t>(cols[i])] += self.grad[i];
  });
}

Tensor diagonal(const Tensor& a) {
  check_2d(a, "diagonal");
  CTCB_CHECK(a.rows() == a.cols(), "diagonal of non-square ",
             shape_str(a.shape()));
  std::size_t n = a.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.at(i, i);
  return make_node({n}, std::move(out), {a}, [n](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) p->grad[i * n + i] += self.grad[i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  CTCB_CHECK(shape_numel(shape) == a.size(), "reshape ",
             shape_str(a.shape()), " to ", shape_str(shape));
  std::vector<double> out(a.value().begin(), a.value().end());
  return make_node(std::move(shape), std::move(out), {a},
                   [](TensorImpl& self) {
    auto& p = self.parents[0];
    p->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p->grad[i] += self.grad[i];
  });
}

// ---- pairwise similarity ----

Tensor pairwise_similarity(const Tensor& a, const Tensor& b, Similarity kind) {
  check_2d(a, "pairwise_similarity");
  check_2d(b, "pairwise_similarity");
  CTCB_CHECK(a.cols() == b.cols(), "pairwise_similarity: dims differ, ",
             shape_str(a.shape()), " vs ", shape_str(b.shape()));
  std::size_t m = a.rows(), n = b.rows(), d = a.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* ar = &a.value()[i * d];
      const double* br = &b.value()[j * d];
      switch (kind) {
        case Similarity::kNegL1:
          for (std::size_t k = 0; k < d; ++k) acc -= std::abs(ar[k] - br[k]);
          break;
        case Similarity::kNegL2Squared:
          for (std::size_t k = 0; k < d; ++k) {
            double diff = ar[k] - br[k];
            acc -= diff * diff;
          }
          break;
        case Similarity::kDot:
          for (std::size_t k = 0; k < d; ++k) acc += ar[k] * br[k];
          break;
      }
      out[i * n + j] = acc;
    }
  return make_node({m, n}, std::move(out), {a, b},
                   [m, n, d, kind](TensorImpl& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) pa->ensure_grad();
    if (pb->requires_grad) pb->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double g = self.grad[i * n + j];
        if (g == 0.0) continue;
        const double* ar = &pa->value[i * d];
        const double* br = &pb->value[j * d];
        for (std::size_t k = 0; k < d; ++k) {
          double da = 0.0;
          switch (kind) {
            case Similarity::kNegL1:
              da = -sign(ar[k] - br[k]);
              break;
            case Similarity::kNegL2Squared:
              da = -2.0 * (ar[k] - br[k]);
              break;
            case Similarity::kDot:
              da = br[k];
              break;
          }
          if (pa->requires_grad) pa->grad[i * d + k] += g * da;
          if (pb->requires_grad) {
            double db = kind == Similarity::kDot ? ar[k] : -da;
            pb->grad[j * d + k] += g * db;
          }
        }
      }
  });
}

// ---- constants ----

Tensor pos_encoding(std::size_t length, std::size_t dim) {
  CTCB_CHECK(length >= 1, "pos_encoding: length must be >= 1");
  if (dim % 2 != 0) {
    throw ContractViolation(
        format_msg("pos_encoding: dim must be even, got ", dim));
  }
  std::vector<double> out(length * dim);
  for (std::size_t p = 0; p < length; ++p)
    for (std::size_t i = 0; 2 * i < dim; ++i) {
      double angle = static_cast<double>(p) /
                     std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                           static_cast<double>(dim));
      out[p * dim + 2 * i] = std::sin(angle);
      out[p * dim + 2 * i + 1] = std::cos(angle);
    }
  return Tensor::from_data({length, dim}, std::move(out));
}

Tensor causal_mask(std::size_t t) {
  std::vector<double> out(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) out[i * t + j] = -1e9;
  return Tensor::from_data({t, t}, std::move(out));
}

}  // namespace ctcbridge::nn

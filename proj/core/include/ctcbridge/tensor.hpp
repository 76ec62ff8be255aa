// ctcbridge/tensor.hpp
//
// Minimal reverse-mode differentiable tensor. Dense 64-bit reals, a tape
// recorded by the forward primitives, and exact gradients on backward().
// No broadcasting: every primitive checks shapes and rejects mismatches.

#ifndef CTCBRIDGE_TENSOR_HPP_
#define CTCBRIDGE_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ctcbridge/error.hpp"
#include "ctcbridge/rng.hpp"

namespace ctcbridge::nn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until touched by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;  // adds into parents' grads

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double fill);
  static Tensor from_data(Shape shape, std::vector<double> data);
  // A leaf that participates in gradient computation.
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return size() == 1; }

  std::span<const double> value() const { return impl_->value; }
  std::span<double> mutable_value() { return impl_->value; }
  double item() const;
  double at(std::size_t i) const { return impl_->value[i]; }
  double at(std::size_t r, std::size_t c) const {
    return impl_->value[r * cols() + c];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  std::span<const double> grad() const;

  // Same value, cut from the tape: gradients do not flow past it.
  Tensor detach() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Runs reverse-mode accumulation from a scalar loss over the recorded tape.
void backward(const Tensor& loss);

// ---- primitives ----
// Elementwise; operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor gelu(const Tensor& a);

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [t x k], w [k x n], bias [n] -> x.w + bias per row
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor transpose(const Tensor& a);

// Row-wise over the last dimension of a 2-D tensor.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// table [v x d], ids in [0, v) -> [ids.size() x d]
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

// Inverted dropout; identity when !train or p == 0. p in [0, 1).
Tensor dropout(const Tensor& a, double p, RngState& rng, bool train);

// Reductions to scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Row/column manipulation (2-D).
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
// Row i of the output repeats row i of the input counts[i] times.
Tensor repeat_rows(const Tensor& a, const std::vector<int>& counts);
// One element per row: out[i] = a[i, cols[i]]. Result shape [rows].
Tensor rows_gather(const Tensor& a, const std::vector<int>& cols);
// Square matrix diagonal -> [n].
Tensor diagonal(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Pairwise similarity between rows of a [m x d] and b [n x d] -> [m x n].
enum class Similarity { kNegL1, kNegL2Squared, kDot };
Tensor pairwise_similarity(const Tensor& a, const Tensor& b, Similarity kind);

// Constants (no gradient).
// pos(p, 2i) = sin(p / 10000^{2i/dim}), pos(p, 2i+1) = cos(same angle).
Tensor pos_encoding(std::size_t length, std::size_t dim);
// [t x t], 0 on and below the diagonal, -1e9 above (additive attention mask).
Tensor causal_mask(std::size_t t);

}  // namespace ctcbridge::nn

#endif  // CTCBRIDGE_TENSOR_HPP_

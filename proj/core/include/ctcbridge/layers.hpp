// ctcbridge/layers.hpp
//
// Parameter store with Adam, checkpoint IO, and the transformer building
// blocks (linear, layer norm, multi-head attention, feed-forward, encoder
// and decoder stacks). All blocks register their parameters under a name
// prefix so checkpoints stay flat and inspectable.

#ifndef CTCBRIDGE_LAYERS_HPP_
#define CTCBRIDGE_LAYERS_HPP_

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ctcbridge/tensor.hpp"

namespace ctcbridge::nn {

class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Tensor create(const std::string& name, Shape shape,
                const std::function<double()>& init);
  Tensor create_zeros(const std::string& name, Shape shape);
  Tensor create_full(const std::string& name, Shape shape, double fill);

  bool has(const std::string& name) const { return params_.count(name) > 0; }
  Tensor get(const std::string& name) const;
  const std::map<std::string, Tensor>& params() const { return params_; }
  std::size_t total_size() const;

  // Zero-fills the gradient of every parameter; call before accumulating a
  // batch so parameters unreachable from the loss end up with zero grads.
  void zero_grad();

  // Scales gradients so their global L2 norm is at most `max_norm`;
  // returns the pre-clip norm. No-op when max_norm <= 0.
  double clip_grad_norm(double max_norm);

  // Standard Adam with bias correction; clears gradients afterward.
  // `trainable` restricts the update to matching names (nullptr = all).
  // Parameters outside the filter keep whatever gradient state they have.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8,
                 const std::function<bool(const std::string&)>* trainable =
                     nullptr);
  std::size_t step_count() const { return step_; }
  void reset_optimizer();

  // Parameter values only (spec checkpoint format).
  void save(const std::string& path) const;
  void load(const std::string& path);
  // Values plus Adam moments and step counter, for exact training resume.
  void save_with_optimizer(const std::string& path) const;
  void load_with_optimizer(const std::string& path);

  // Overwrites parameter values with the mean of the given snapshots.
  void load_average(const std::vector<std::string>& paths);

  std::vector<double> snapshot_values() const;
  void restore_values(const std::vector<double>& flat);

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Tensor> params_;
  std::map<std::string, Moments> moments_;
  std::size_t step_ = 0;
};

// Flat named-tensor container file: one-line JSON header mapping
// name -> {shape, byte_offset}, a newline, then the raw little-endian
// 64-bit floats concatenated in header order.
void write_tensor_file(
    const std::string& path,
    const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_tensor_file(
    const std::string& path);

// ---- initializers ----
std::function<double()> xavier_uniform(std::size_t fan_in,
                                       std::size_t fan_out, RngState& rng);
std::function<double()> normal_init(double stddev, RngState& rng);

// ---- blocks ----

struct Linear {
  Tensor w, b;
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, std::size_t in,
         std::size_t out, RngState& rng);
  Tensor operator()(const Tensor& x) const { return affine(x, w, b); }
};

struct LayerNormParams {
  Tensor gamma, beta;
  LayerNormParams() = default;
  LayerNormParams(ParamStore& store, const std::string& prefix,
                  std::size_t dim);
  Tensor operator()(const Tensor& x) const {
    return layer_norm(x, gamma, beta);
  }
};

struct MultiHeadAttention {
  std::size_t heads = 1, dim = 0;
  Linear q, k, v, o;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& prefix,
                     std::size_t dim, std::size_t heads, RngState& rng);
  // mask, when given, is [Tq x Tkv] additive (0 keep, -1e9 drop).
  Tensor operator()(const Tensor& query, const Tensor& key_value,
                    const Tensor* mask) const;
};

struct FeedForward {
  Linear w1, w2;
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& prefix, std::size_t dim,
              std::size_t ffn_dim, RngState& rng);
  Tensor operator()(const Tensor& x, double dropout_p, RngState& rng,
                    bool train) const;
};

// Pre-norm residual blocks; no terminal norm, so an encoder with zeroed
// output projections reduces exactly to the identity on its input.
struct EncoderLayer {
  LayerNormParams ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ffn;
  EncoderLayer() = default;
  EncoderLayer(ParamStore& store, const std::string& prefix, std::size_t dim,
               std::size_t heads, std::size_t ffn_dim, RngState& rng);
  Tensor operator()(const Tensor& x, const Tensor* mask, double dropout_p,
                    RngState& rng, bool train) const;
};

struct TransformerEncoder {
  std::vector<EncoderLayer> layers;
  TransformerEncoder() = default;
  TransformerEncoder(ParamStore& store, const std::string& prefix,
                     std::size_t num_layers, std::size_t dim,
                     std::size_t heads, std::size_t ffn_dim, RngState& rng);
  Tensor operator()(const Tensor& x, double dropout_p, RngState& rng,
                    bool train, const Tensor* mask = nullptr) const;
};

struct DecoderLayer {
  LayerNormParams ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;
  DecoderLayer() = default;
  DecoderLayer(ParamStore& store, const std::string& prefix, std::size_t dim,
               std::size_t heads, std::size_t ffn_dim, RngState& rng);
  Tensor operator()(const Tensor& x, const Tensor& memory,
                    const Tensor& self_mask, double dropout_p, RngState& rng,
                    bool train) const;
};

struct TransformerDecoder {
  std::vector<DecoderLayer> layers;
  TransformerDecoder() = default;
  TransformerDecoder(ParamStore& store, const std::string& prefix,
                     std::size_t num_layers, std::size_t dim,
                     std::size_t heads, std::size_t ffn_dim, RngState& rng);
  Tensor operator()(const Tensor& x, const Tensor& memory, double dropout_p,
                    RngState& rng, bool train) const;
};

}  // namespace ctcbridge::nn

#endif  // CTCBRIDGE_LAYERS_HPP_

// core/src/layers.cpp

#include "ctcbridge/layers.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ctcbridge::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

using ordered_json = nlohmann::ordered_json;

// ---- ParamStore ----

Tensor ParamStore::create(const std::string& name, Shape shape,
                          const std::function<double()>& init) {
  CTCB_CHECK(!has(name), "duplicate parameter name '", name, "'");
  std::vector<double> data(shape_numel(shape));
  for (auto& x : data) x = init();
  Tensor t = Tensor::param(std::move(shape), std::move(data));
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::create_zeros(const std::string& name, Shape shape) {
  return create(name, std::move(shape), [] { return 0.0; });
}

Tensor ParamStore::create_full(const std::string& name, Shape shape,
                               double fill) {
  return create(name, std::move(shape), [fill] { return fill; });
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  CTCB_CHECK(it != params_.end(), "unknown parameter '", name, "'");
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) {
    auto impl = t.impl();
    impl->grad.assign(impl->value.size(), 0.0);
  }
}

void ParamStore::adam_step(
    double lr, double beta1, double beta2, double eps,
    const std::function<bool(const std::string&)>* trainable) {
  ++step_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& [name, t] : params_) {
    if (trainable && !(*trainable)(name)) continue;
    auto impl = t.impl();
    CTCB_CHECK(impl->grad.size() == impl->value.size(),
               "adam_step: gradient missing for '", name, "'");
    auto& mom = moments_[name];
    if (mom.m.size() != impl->value.size()) {
      mom.m.assign(impl->value.size(), 0.0);
      mom.v.assign(impl->value.size(), 0.0);
    }
    for (std::size_t i = 0; i < impl->value.size(); ++i) {
      double g = impl->grad[i];
      mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
      mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
      double mhat = mom.m[i] / bc1;
      double vhat = mom.v[i] / bc2;
      impl->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    impl->grad.clear();
  }
}

double ParamStore::clip_grad_norm(double max_norm) {
  double total = 0.0;
  for (auto& [name, t] : params_) {
    auto impl = t.impl();
    if (impl->grad.size() != impl->value.size()) continue;
    for (double g : impl->grad) total += g * g;
  }
  double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    double scale = max_norm / norm;
    for (auto& [name, t] : params_) {
      auto impl = t.impl();
      if (impl->grad.size() != impl->value.size()) continue;
      for (double& g : impl->grad) g *= scale;
    }
  }
  return norm;
}

void ParamStore::reset_optimizer() {
  moments_.clear();
  step_ = 0;
}

std::vector<double> ParamStore::snapshot_values() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& [name, t] : params_)
    flat.insert(flat.end(), t.value().begin(), t.value().end());
  return flat;
}

void ParamStore::restore_values(const std::vector<double>& flat) {
  CTCB_CHECK(flat.size() == total_size(), "snapshot size ", flat.size(),
             " does not match store size ", total_size());
  std::size_t offset = 0;
  for (auto& [name, t] : params_) {
    auto impl = t.impl();
    std::copy_n(&flat[offset], impl->value.size(), impl->value.data());
    offset += impl->value.size();
  }
}

// ---- tensor container file ----

void write_tensor_file(
    const std::string& path,
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
  ordered_json header = ordered_json::object();
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    ordered_json entry;
    entry["shape"] = t.shape();
    entry["byte_offset"] = offset;
    header[name] = entry;
    offset += t.size() * sizeof(double);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << header.dump() << '\n';
  for (const auto& [name, t] : tensors) {
    os.write(reinterpret_cast<const char*>(t.value().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("short write to " + path);
}

std::vector<std::pair<std::string, Tensor>> read_tensor_file(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(is, line);
  ordered_json header = ordered_json::parse(line);
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto it = header.begin(); it != header.end(); ++it) {
    Shape shape = it.value()["shape"].get<Shape>();
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("truncated tensor file " + path);
    out.emplace_back(it.key(), Tensor::from_data(std::move(shape),
                                                 std::move(data)));
  }
  return out;
}

void ParamStore::save(const std::string& path) const {
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(params_.size());
  for (const auto& [name, t] : params_) tensors.emplace_back(name, t);
  write_tensor_file(path, tensors);
}

void ParamStore::load(const std::string& path) {
  for (const auto& [name, t] : read_tensor_file(path)) {
    auto it = params_.find(name);
    CTCB_CHECK(it != params_.end(), "checkpoint has unknown parameter '",
               name, "'");
    CTCB_CHECK(it->second.shape() == t.shape(), "shape mismatch for '", name,
               "': ", shape_str(it->second.shape()), " vs ",
               shape_str(t.shape()));
    auto impl = it->second.impl();
    std::copy(t.value().begin(), t.value().end(), impl->value.begin());
  }
}

void ParamStore::save_with_optimizer(const std::string& path) const {
  std::vector<std::pair<std::string, Tensor>> tensors;
  for (const auto& [name, t] : params_) tensors.emplace_back(name, t);
  for (const auto& [name, mom] : moments_) {
    tensors.emplace_back("adam.m." + name,
                         Tensor::from_data({mom.m.size()}, mom.m));
    tensors.emplace_back("adam.v." + name,
                         Tensor::from_data({mom.v.size()}, mom.v));
  }
  tensors.emplace_back("adam.step",
                       Tensor::from_data({1}, {static_cast<double>(step_)}));
  write_tensor_file(path, tensors);
}

void ParamStore::load_with_optimizer(const std::string& path) {
  moments_.clear();
  step_ = 0;
  for (const auto& [name, t] : read_tensor_file(path)) {
    if (name == "adam.step") {
      step_ = static_cast<std::size_t>(t.item());
    } else if (name.rfind("adam.m.", 0) == 0) {
      moments_[name.substr(7)].m.assign(t.value().begin(), t.value().end());
    } else if (name.rfind("adam.v.", 0) == 0) {
      moments_[name.substr(7)].v.assign(t.value().begin(), t.value().end());
    } else {
      auto it = params_.find(name);
      CTCB_CHECK(it != params_.end(), "checkpoint has unknown parameter '",
                 name, "'");
      auto impl = it->second.impl();
      CTCB_CHECK(impl->value.size() == t.size(), "size mismatch for '", name,
                 "'");
      std::copy(t.value().begin(), t.value().end(), impl->value.begin());
    }
  }
}

void ParamStore::load_average(const std::vector<std::string>& paths) {
  CTCB_CHECK(!paths.empty(), "load_average: no checkpoints");
  std::vector<double> acc(total_size(), 0.0);
  for (const auto& p : paths) {
    load(p);
    auto snap = snapshot_values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += snap[i];
  }
  for (auto& x : acc) x /= static_cast<double>(paths.size());
  restore_values(acc);
}

// ---- initializers ----

std::function<double()> xavier_uniform(std::size_t fan_in,
                                       std::size_t fan_out, RngState& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return [bound, &rng] { return (2.0 * rng.uniform() - 1.0) * bound; };
}

std::function<double()> normal_init(double stddev, RngState& rng) {
  return [stddev, &rng] { return stddev * rng.normal(); };
}

// ---- blocks ----

Linear::Linear(ParamStore& store, const std::string& prefix, std::size_t in,
               std::size_t out, RngState& rng) {
  w = store.create(prefix + ".w", {in, out}, xavier_uniform(in, out, rng));
  b = store.create_zeros(prefix + ".b", {out});
}

LayerNormParams::LayerNormParams(ParamStore& store, const std::string& prefix,
                                 std::size_t dim) {
  gamma = store.create_full(prefix + ".gamma", {dim}, 1.0);
  beta = store.create_zeros(prefix + ".beta", {dim});
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store,
                                       const std::string& prefix,
                                       std::size_t dim, std::size_t heads,
                                       RngState& rng)
    : heads(heads), dim(dim) {
  if (dim % heads != 0) {
    throw ContractViolation(format_msg("attention dim ", dim,
                                       " not divisible by heads ", heads));
  }
  q = Linear(store, prefix + ".q", dim, dim, rng);
  k = Linear(store, prefix + ".k", dim, dim, rng);
  v = Linear(store, prefix + ".v", dim, dim, rng);
  o = Linear(store, prefix + ".o", dim, dim, rng);
}

Tensor MultiHeadAttention::operator()(const Tensor& query,
                                      const Tensor& key_value,
                                      const Tensor* mask) const {
  std::size_t dh = dim / heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor qp = q(query), kp = k(key_value), vp = v(key_value);
  std::vector<Tensor> ctx;
  ctx.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(qp, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(kp, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(vp, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    if (mask) scores = add(scores, *mask);
    ctx.push_back(matmul(softmax_rows(scores), vh));
  }
  return o(concat_cols(ctx));
}

FeedForward::FeedForward(ParamStore& store, const std::string& prefix,
                         std::size_t dim, std::size_t ffn_dim, RngState& rng) {
  w1 = Linear(store, prefix + ".w1", dim, ffn_dim, rng);
  w2 = Linear(store, prefix + ".w2", ffn_dim, dim, rng);
}

Tensor FeedForward::operator()(const Tensor& x, double dropout_p,
                               RngState& rng, bool train) const {
  return w2(dropout(gelu(w1(x)), dropout_p, rng, train));
}

EncoderLayer::EncoderLayer(ParamStore& store, const std::string& prefix,
                           std::size_t dim, std::size_t heads,
                           std::size_t ffn_dim, RngState& rng)
    : ln1(store, prefix + ".ln1", dim),
      ln2(store, prefix + ".ln2", dim),
      attn(store, prefix + ".attn", dim, heads, rng),
      ffn(store, prefix + ".ffn", dim, ffn_dim, rng) {}

Tensor EncoderLayer::operator()(const Tensor& x, const Tensor* mask,
                                double dropout_p, RngState& rng,
                                bool train) const {
  Tensor normed = ln1(x);
  Tensor a = add(x, dropout(attn(normed, normed, mask), dropout_p, rng,
                            train));
  return add(a, dropout(ffn(ln2(a), dropout_p, rng, train), dropout_p, rng,
                        train));
}

TransformerEncoder::TransformerEncoder(ParamStore& store,
                                       const std::string& prefix,
                                       std::size_t num_layers,
                                       std::size_t dim, std::size_t heads,
                                       std::size_t ffn_dim, RngState& rng) {
  CTCB_CHECK(num_layers >= 1, "encoder needs at least one layer");
  layers.reserve(num_layers);
  for (std::size_t i = 0; i < num_layers; ++i)
    layers.emplace_back(store, prefix + ".layer" + std::to_string(i), dim,
                        heads, ffn_dim, rng);
}

Tensor TransformerEncoder::operator()(const Tensor& x, double dropout_p,
                                      RngState& rng, bool train,
                                      const Tensor* mask) const {
  Tensor h = x;
  for (const auto& layer : layers) h = layer(h, mask, dropout_p, rng, train);
  return h;
}

DecoderLayer::DecoderLayer(ParamStore& store, const std::string& prefix,
                           std::size_t dim, std::size_t heads,
                           std::size_t ffn_dim, RngState& rng)
    : ln1(store, prefix + ".ln1", dim),
      ln2(store, prefix + ".ln2", dim),
      ln3(store, prefix + ".ln3", dim),
      self_attn(store, prefix + ".self", dim, heads, rng),
      cross_attn(store, prefix + ".cross", dim, heads, rng),
      ffn(store, prefix + ".ffn", dim, ffn_dim, rng) {}

Tensor DecoderLayer::operator()(const Tensor& x, const Tensor& memory,
                                const Tensor& self_mask, double dropout_p,
                                RngState& rng, bool train) const {
  Tensor n1 = ln1(x);
  Tensor a = add(x, dropout(self_attn(n1, n1, &self_mask), dropout_p, rng,
                            train));
  Tensor b = add(a, dropout(cross_attn(ln2(a), memory, nullptr), dropout_p,
                            rng, train));
  return add(b, dropout(ffn(ln3(b), dropout_p, rng, train), dropout_p, rng,
                        train));
}

TransformerDecoder::TransformerDecoder(ParamStore& store,
                                       const std::string& prefix,
                                       std::size_t num_layers,
                                       std::size_t dim, std::size_t heads,
                                       std::size_t ffn_dim, RngState& rng) {
  CTCB_CHECK(num_layers >= 1, "decoder needs at least one layer");
  layers.reserve(num_layers);
  for (std::size_t i = 0; i < num_layers; ++i)
    layers.emplace_back(store, prefix + ".layer" + std::to_string(i), dim,
                        heads, ffn_dim, rng);
}

Tensor TransformerDecoder::operator()(const Tensor& x, const Tensor& memory,
                                      double dropout_p, RngState& rng,
                                      bool train) const {
  Tensor mask = causal_mask(x.rows());
  Tensor h = x;
  for (const auto& layer : layers)
    h = layer(h, memory, mask, dropout_p, rng, train);
  return h;
}

}  // namespace ctcbridge::nn

// core/src/adaptor.cpp

#include "ctcbridge/adaptor.hpp"

namespace ctcbridge::adaptor {

void AdaptorConfig::validate() const {
  CTCB_CHECK(upsample >= 1, "adaptor upsample factor must be >= 1, got ",
             upsample);
  CTCB_CHECK(layers >= 1, "adaptor needs at least one layer");
  CTCB_CHECK(model_dim >= 1 && heads >= 1 && model_dim % heads == 0,
             "adaptor model_dim ", model_dim, " not divisible by heads ",
             heads);
  CTCB_CHECK(ffn_dim >= 1, "adaptor ffn_dim must be >= 1");
}

nn::Tensor upsample(const nn::Tensor& hw, int factor) {
  CTCB_CHECK(factor >= 1, "upsample factor must be >= 1, got ", factor);
  CTCB_CHECK(hw.shape().size() == 2 && hw.rows() >= 1,
             "upsample expects a nonempty 2-D input, got ",
             nn::shape_str(hw.shape()));
  return nn::repeat_rows(hw, std::vector<int>(hw.rows(), factor));
}

std::vector<SegmentSpan> segments_from_path(const std::vector<int>& labels,
                                            int blank_id) {
  std::vector<SegmentSpan> spans;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] == blank_id) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < labels.size() && labels[j + 1] == labels[i]) ++j;
    spans.push_back({labels[i], i, j});
    i = j + 1;
  }
  return spans;
}

nn::Tensor merge_segments(const nn::Tensor& frames,
                          const std::vector<SegmentSpan>& spans,
                          const nn::Tensor& log_probs,
                          bool confidence_on_logprob) {
  std::size_t d = frames.cols();
  CTCB_CHECK(frames.rows() == log_probs.rows(),
             "merge_segments: frame count mismatch, ", frames.rows(), " vs ",
             log_probs.rows());
  if (spans.empty()) return nn::Tensor::zeros({0, d});
  std::vector<nn::Tensor> merged;
  merged.reserve(spans.size());
  for (const auto& span : spans) {
    CTCB_CHECK(span.l <= span.r && span.r < frames.rows(),
               "merge_segments: span [", span.l, ", ", span.r,
               "] outside ", frames.rows(), " frames");
    std::size_t len = span.r - span.l + 1;
    nn::Tensor lp = nn::rows_gather(
        nn::slice_rows(log_probs, span.l, span.r + 1),
        std::vector<int>(len, span.token));
    nn::Tensor confidence =
        confidence_on_logprob ? lp : nn::exp(lp);
    nn::Tensor weights =
        nn::softmax_rows(nn::reshape(confidence, {1, len}));
    merged.push_back(
        nn::matmul(weights, nn::slice_rows(frames, span.l, span.r + 1)));
  }
  return nn::concat_rows(merged);
}

VocabAdaptor::VocabAdaptor(nn::ParamStore& store, const std::string& prefix,
                           const AdaptorConfig& cfg, std::size_t vocab_size,
                           RngState& rng)
    : cfg_(cfg), vocab_size_(vocab_size) {
  cfg_.validate();
  CTCB_CHECK(vocab_size >= 1, "adaptor needs a nonempty vocabulary");
  encoder_ = nn::TransformerEncoder(
      store, prefix + ".enc", static_cast<std::size_t>(cfg_.layers),
      static_cast<std::size_t>(cfg_.model_dim),
      static_cast<std::size_t>(cfg_.heads),
      static_cast<std::size_t>(cfg_.ffn_dim), rng);
  proj_ = nn::Linear(store, prefix + ".proj",
                     static_cast<std::size_t>(cfg_.model_dim),
                     vocab_size + 1, rng);
}

nn::Tensor VocabAdaptor::encode(const nn::Tensor& upsampled, RngState& rng,
                                bool train) const {
  CTCB_CHECK(upsampled.cols() == static_cast<std::size_t>(cfg_.model_dim),
             "adaptor encode: input dim ", upsampled.cols(),
             " != model_dim ", cfg_.model_dim);
  nn::Tensor x = nn::add(
      upsampled, nn::pos_encoding(upsampled.rows(), upsampled.cols()));
  return encoder_(x, cfg_.dropout, rng, train);
}

nn::Tensor VocabAdaptor::project(const nn::Tensor& frames) const {
  return nn::log_softmax_rows(proj_(frames));
}

VocabAdaptor::TrainResult VocabAdaptor::adapt_train(
    const nn::Tensor& hw, const std::vector<int>& target, RngState& rng,
    bool train) const {
  TrainResult out;
  nn::Tensor frames = encode(upsample(hw, cfg_.upsample), rng, train);
  out.log_probs = project(frames);
  out.ctc_loss = ctc::ctc_loss(out.log_probs, target);
  out.path = ctc::viterbi_forced_align(out.log_probs, target);
  out.hv = merge_segments(frames, segments_from_path(out.path.labels,
                                                     blank_id()),
                          out.log_probs, cfg_.confidence_on_logprob);
  return out;
}

VocabAdaptor::InferResult VocabAdaptor::adapt_infer(const nn::Tensor& hw,
                                                    RngState& rng) const {
  InferResult out;
  nn::Tensor frames = encode(upsample(hw, cfg_.upsample), rng, false);
  nn::Tensor log_probs = project(frames);
  auto [tokens, path] = ctc::best_path_decode(log_probs);
  out.predicted = tokens.ids;
  out.path = path;
  out.hv = merge_segments(frames, segments_from_path(path.labels, blank_id()),
                          log_probs, cfg_.confidence_on_logprob);
  return out;
}

}  // namespace ctcbridge::adaptor

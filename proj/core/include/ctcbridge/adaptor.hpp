// ctcbridge/adaptor.hpp
//
// The vocabulary adaptor: upsamples decoder hidden states, encodes them
// with positions, projects onto the base vocabulary plus blank, and turns
// the frame sequence into one vector per target token by forced alignment
// (training) or argmax decoding (inference) with confidence-weighted
// segment merging.

#ifndef CTCBRIDGE_ADAPTOR_HPP_
#define CTCBRIDGE_ADAPTOR_HPP_

#include <string>
#include <vector>

#include "ctcbridge/ctc.hpp"
#include "ctcbridge/layers.hpp"
#include "ctcbridge/tensor.hpp"

namespace ctcbridge::adaptor {

struct AdaptorConfig {
  int upsample = 5;     // lambda
  int layers = 4;
  int model_dim = 64;
  int heads = 4;
  int ffn_dim = 128;
  double dropout = 0.3;
  // Segment-merge weights are a softmax over probabilities, as defined;
  // this flag switches to a softmax over log-probabilities for ablation.
  bool confidence_on_logprob = false;

  void validate() const;
};

struct SegmentSpan {
  int token;      // base-vocabulary index
  std::size_t l;  // first frame
  std::size_t r;  // last frame (inclusive)
};

// Each row of the input appears `factor` consecutive times in the output.
nn::Tensor upsample(const nn::Tensor& hw, int factor);

// One span per maximal non-blank run; blank frames belong to no span.
std::vector<SegmentSpan> segments_from_path(const std::vector<int>& labels,
                                            int blank_id);

// h_i = sum_j p_j o_j over span i, with p_j the softmax of the chosen
// label's confidence within the span. Differentiable through both inputs.
nn::Tensor merge_segments(const nn::Tensor& frames,
                          const std::vector<SegmentSpan>& spans,
                          const nn::Tensor& log_probs,
                          bool confidence_on_logprob = false);

class VocabAdaptor {
 public:
  VocabAdaptor(nn::ParamStore& store, const std::string& prefix,
               const AdaptorConfig& cfg, std::size_t vocab_size,
               RngState& rng);

  // Adds sinusoid positions and runs the transformer encoder.
  nn::Tensor encode(const nn::Tensor& upsampled, RngState& rng,
                    bool train) const;
  // Affine map to |V|+1 classes followed by row-wise log-softmax.
  nn::Tensor project(const nn::Tensor& frames) const;

  struct TrainResult {
    nn::Tensor ctc_loss;
    nn::Tensor hv;        // [M x d], forced-alignment merge
    nn::Tensor log_probs;
    ctc::AlignmentPath path;
  };
  // Forced alignment against the ground-truth target; the path is
  // recomputed from the current logits on every call.
  TrainResult adapt_train(const nn::Tensor& hw,
                          const std::vector<int>& target, RngState& rng,
                          bool train) const;

  struct InferResult {
    std::vector<int> predicted;  // collapse of the argmax path
    nn::Tensor hv;               // [|predicted| x d]
    ctc::AlignmentPath path;
  };
  InferResult adapt_infer(const nn::Tensor& hw, RngState& rng) const;

  const AdaptorConfig& config() const { return cfg_; }
  int blank_id() const { return static_cast<int>(vocab_size_); }

 private:
  AdaptorConfig cfg_;
  std::size_t vocab_size_;
  nn::TransformerEncoder encoder_;
  nn::Linear proj_;
};

}  // namespace ctcbridge::adaptor

#endif  // CTCBRIDGE_ADAPTOR_HPP_

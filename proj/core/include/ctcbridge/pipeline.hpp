// ctcbridge/pipeline.hpp
//
// The two-pass composite model: a source-to-text translator, the
// vocabulary adaptor, and a duration-based synthesizer, plus the training
// objectives (supervised, zero-shot stage 1/2), cascade inference, and
// evaluation.

#ifndef CTCBRIDGE_PIPELINE_HPP_
#define CTCBRIDGE_PIPELINE_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctcbridge/adaptor.hpp"
#include "ctcbridge/align.hpp"
#include "ctcbridge/layers.hpp"
#include "ctcbridge/synth.hpp"

namespace ctcbridge::pipeline {

struct ModelConfig {
  int dim = 64;
  int heads = 4;
  int ffn_dim = 128;
  int s2tt_enc_layers = 2;
  int s2tt_dec_layers = 2;
  int tts_enc_layers = 2;
  int tts_dec_layers = 2;
  int tts_dim = 0;  // 0: same as dim; otherwise bridged by a linear layer
  int dur_hidden = 64;
  double dropout = 0.3;
  double label_smoothing = 0.1;
  int max_decode_len = 48;

  int effective_tts_dim() const { return tts_dim > 0 ? tts_dim : dim; }
  void validate() const;
};

class S2TTModel {
 public:
  S2TTModel(nn::ParamStore& store, const std::string& prefix,
            const ModelConfig& cfg, std::size_t frame_dim,
            std::size_t subword_count, RngState& rng);

  int eos_id() const { return static_cast<int>(subword_count_); }
  int bos_id() const { return static_cast<int>(subword_count_) + 1; }

  nn::Tensor encode(const nn::Tensor& source, RngState& rng,
                    bool train) const;
  // Teacher forcing with input [bos, y_1 .. y_N]; returns N+1 decoder
  // states, where state i predicts y_{i+1} (and the last predicts eos).
  nn::Tensor decode_states(const nn::Tensor& memory,
                           const std::vector<int>& yw, RngState& rng,
                           bool train) const;
  nn::Tensor output_logits(const nn::Tensor& states) const;

  struct Decoded {
    std::vector<int> tokens;  // subword ids, eos stripped
    nn::Tensor hw;            // hidden states that produced each token
    bool truncated = false;
  };
  Decoded greedy_decode(const nn::Tensor& source, RngState& rng) const;

 private:
  ModelConfig cfg_;
  std::size_t subword_count_;
  nn::Linear in_proj_;
  nn::TransformerEncoder enc_;
  nn::Tensor emb_;
  nn::TransformerDecoder dec_;
  nn::Linear out_;
};

class TTSModel {
 public:
  TTSModel(nn::ParamStore& store, const std::string& prefix,
           const ModelConfig& cfg, std::size_t base_count,
           std::size_t signal_dim, RngState& rng);

  // Encoder over the phoneme embedding of the target tokens.
  nn::Tensor encode_embedding(const std::vector<int>& yv, RngState& rng,
                              bool train) const;
  // Encoder over adaptor states (already bridged to the synthesizer dim).
  nn::Tensor encode_states(const nn::Tensor& hv, RngState& rng,
                           bool train) const;
  nn::Tensor predict_log_durations(const nn::Tensor& encoded, RngState& rng,
                                   bool train) const;  // [M]
  nn::Tensor decode_frames(const nn::Tensor& encoded,
                           const std::vector<int>& durations, RngState& rng,
                           bool train) const;  // [sum(durations) x signal]

 private:
  ModelConfig cfg_;
  nn::Tensor emb_;
  nn::TransformerEncoder enc_;
  nn::Linear dur1_, dur2_;
  nn::TransformerEncoder dec_;
  nn::Linear out_;
};

// All three modules over one parameter store. Parameter name prefixes:
// "f." (translator), "adaptor.", "g." (synthesizer), "bridge." (optional).
class ComposedModel {
 public:
  ComposedModel(const ModelConfig& model_cfg,
                const adaptor::AdaptorConfig& adaptor_cfg,
                std::size_t frame_dim, std::size_t subword_count,
                std::size_t base_count, std::size_t signal_dim,
                std::uint64_t seed);

  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }
  const S2TTModel& s2tt() const { return *s2tt_; }
  const adaptor::VocabAdaptor& vocab_adaptor() const { return *adaptor_; }
  const TTSModel& tts() const { return *tts_; }
  const ModelConfig& config() const { return model_cfg_; }

  // Maps adaptor output into the synthesizer dimension (identity when the
  // dimensions already agree).
  nn::Tensor bridge(const nn::Tensor& hv) const;

 private:
  ModelConfig model_cfg_;
  adaptor::AdaptorConfig adaptor_cfg_;
  nn::ParamStore store_;
  RngState init_rng_;
  std::unique_ptr<S2TTModel> s2tt_;
  std::unique_ptr<adaptor::VocabAdaptor> adaptor_;
  std::unique_ptr<TTSModel> tts_;
  std::optional<nn::Linear> bridge_;
};

struct LossParts {
  double s2tt = 0.0;
  double ctc = 0.0;
  double tts_l1 = 0.0;
  double tts_dur = 0.0;
  double align_value = 0.0;
  double total = 0.0;

  LossParts& operator+=(const LossParts& other);
  LossParts& operator/=(double n);
};

// Mean label-smoothed negative log-likelihood: (1-eps) on the target plus
// eps spread uniformly over the output vocabulary.
nn::Tensor label_smoothed_ce(const nn::Tensor& log_probs,
                             const std::vector<int>& targets, double eps);

// Label-smoothed token cross-entropy; also exposes the first-pass hidden
// states feeding the adaptor.
struct S2TTForward {
  nn::Tensor loss;
  nn::Tensor hw;  // [N x dim]
};
S2TTForward s2tt_loss(const S2TTModel& model, const synth::Triple& sample,
                      double label_smoothing, RngState& rng, bool train);

// L1 on frames under oracle-duration expansion plus squared error on log
// durations.
struct TTSForward {
  nn::Tensor loss;
  double l1 = 0.0;
  double dur = 0.0;
};
TTSForward tts_loss(const TTSModel& model, const nn::Tensor& encoded,
                    const synth::Triple& sample, RngState& rng, bool train);

// Composite per-sample objectives. Each returns the scalar loss tensor to
// backpropagate plus the detached component values.
struct SampleLoss {
  nn::Tensor loss;
  LossParts parts;
  std::optional<align::EncoderPair> pair;
};
SampleLoss supervised_loss(const ComposedModel& model,
                           const synth::Triple& sample, double gamma,
                           RngState& rng, bool train);
SampleLoss zs_stage1_loss(const ComposedModel& model,
                          const synth::Triple& sample, RngState& rng,
                          bool train);
SampleLoss zs_stage2_s2tt_loss(const ComposedModel& model,
                               const synth::Triple& sample,
                               const align::AlignConfig& align_cfg,
                               RngState& rng, bool train);
SampleLoss zs_stage2_tts_loss(const ComposedModel& model,
                              const synth::Triple& sample, RngState& rng,
                              bool train);

// Teacher-forced encoder pair (adaptor states vs embeddings) for the
// alignment diagnostics.
align::EncoderPair encoder_pair(const ComposedModel& model,
                                const synth::Triple& sample, RngState& rng,
                                bool train);

struct InferenceResult {
  nn::Tensor signal;            // [T x signal_dim]; zero rows when empty
  std::vector<int> predicted;   // base-vocabulary ids from the adaptor
  std::vector<int> yw_tokens;   // first-pass subword ids
  std::vector<int> durations;
  bool empty_output = false;
};
InferenceResult infer_s2st(const ComposedModel& model,
                           const nn::Tensor& source);
InferenceResult cascade_infer(const ComposedModel& model,
                              const nn::Tensor& source,
                              const vocab::SubwordVocab& subwords,
                              const vocab::BaseVocab& base);

struct EvalMetrics {
  double token_accuracy = 0.0;
  double ngram_score = 0.0;
  double alignment = 0.0;
  double uniformity = 0.0;
  double empty_output_rate = 0.0;
  std::size_t samples = 0;
};
enum class InferenceMode { kPipeline, kCascade, kGroundTruth };
InferenceMode inference_mode_from_name(const std::string& name);
std::string inference_mode_name(InferenceMode mode);

EvalMetrics evaluate(const ComposedModel& model,
                     const std::vector<synth::Triple>& samples,
                     const synth::Lexicon& lexicon,
                     const vocab::SubwordVocab& subwords,
                     const vocab::BaseVocab& base, InferenceMode mode);

}  // namespace ctcbridge::pipeline

#endif  // CTCBRIDGE_PIPELINE_HPP_

// core/src/pipeline.cpp

#include "ctcbridge/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "ctcbridge/metrics.hpp"

namespace ctcbridge::pipeline {

void ModelConfig::validate() const {
  CTCB_CHECK(dim >= 2 && heads >= 1 && dim % heads == 0, "model dim ", dim,
             " not divisible by heads ", heads);
  CTCB_CHECK(dim % 2 == 0, "model dim must be even for sinusoid positions");
  int td = effective_tts_dim();
  CTCB_CHECK(td % heads == 0 && td % 2 == 0, "tts dim ", td,
             " incompatible with heads ", heads);
  CTCB_CHECK(s2tt_enc_layers >= 1 && s2tt_dec_layers >= 1 &&
                 tts_enc_layers >= 1 && tts_dec_layers >= 1,
             "layer counts must be >= 1");
  CTCB_CHECK(label_smoothing >= 0.0 && label_smoothing < 1.0,
             "label smoothing must lie in [0, 1)");
  CTCB_CHECK(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  CTCB_CHECK(max_decode_len >= 1, "max_decode_len must be >= 1");
}

// ---- S2TTModel ----

S2TTModel::S2TTModel(nn::ParamStore& store, const std::string& prefix,
                     const ModelConfig& cfg, std::size_t frame_dim,
                     std::size_t subword_count, RngState& rng)
    : cfg_(cfg), subword_count_(subword_count) {
  cfg_.validate();
  auto dim = static_cast<std::size_t>(cfg.dim);
  in_proj_ = nn::Linear(store, prefix + ".in", frame_dim, dim, rng);
  enc_ = nn::TransformerEncoder(store, prefix + ".enc",
                                static_cast<std::size_t>(cfg.s2tt_enc_layers),
                                dim, static_cast<std::size_t>(cfg.heads),
                                static_cast<std::size_t>(cfg.ffn_dim), rng);
  // Input embeddings cover units plus eos and bos; outputs cover units
  // plus eos.
  emb_ = store.create(prefix + ".emb", {subword_count + 2, dim},
                      nn::normal_init(1.0 / std::sqrt(double(cfg.dim)), rng));
  dec_ = nn::TransformerDecoder(store, prefix + ".dec",
                                static_cast<std::size_t>(cfg.s2tt_dec_layers),
                                dim, static_cast<std::size_t>(cfg.heads),
                                static_cast<std::size_t>(cfg.ffn_dim), rng);
  out_ = nn::Linear(store, prefix + ".out", dim, subword_count + 1, rng);
}

nn::Tensor S2TTModel::encode(const nn::Tensor& source, RngState& rng,
                             bool train) const {
  CTCB_CHECK(source.rows() >= 1, "s2tt encode: empty source");
  nn::Tensor x = in_proj_(source);
  x = nn::add(x, nn::pos_encoding(x.rows(), x.cols()));
  x = nn::dropout(x, cfg_.dropout, rng, train);
  return enc_(x, cfg_.dropout, rng, train);
}

nn::Tensor S2TTModel::decode_states(const nn::Tensor& memory,
                                    const std::vector<int>& yw,
                                    RngState& rng, bool train) const {
  std::vector<int> input;
  input.reserve(yw.size() + 1);
  input.push_back(bos_id());
  for (int t : yw) {
    CTCB_CHECK(t >= 0 && static_cast<std::size_t>(t) < subword_count_,
               "subword id ", t, " out of range");
    input.push_back(t);
  }
  nn::Tensor x = nn::embedding(emb_, input);
  x = nn::add(x, nn::pos_encoding(x.rows(), x.cols()));
  x = nn::dropout(x, cfg_.dropout, rng, train);
  return dec_(x, memory, cfg_.dropout, rng, train);
}

nn::Tensor S2TTModel::output_logits(const nn::Tensor& states) const {
  return out_(states);
}

S2TTModel::Decoded S2TTModel::greedy_decode(const nn::Tensor& source,
                                            RngState& rng) const {
  Decoded result;
  nn::Tensor memory = encode(source, rng, false);
  std::vector<int> prefix;
  std::vector<nn::Tensor> collected;
  for (int step = 0; step < cfg_.max_decode_len; ++step) {
    nn::Tensor states = decode_states(memory, prefix, rng, false);
    nn::Tensor last = nn::slice_rows(states, states.rows() - 1,
                                     states.rows());
    nn::Tensor logits = output_logits(last);
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits.at(0, k) > logits.at(0, best)) best = k;
    if (static_cast<int>(best) == eos_id()) {
      return {prefix, collected.empty()
                          ? nn::Tensor::zeros({0,
                                               static_cast<std::size_t>(
                                                   cfg_.dim)})
                          : nn::concat_rows(collected),
              false};
    }
    prefix.push_back(static_cast<int>(best));
    collected.push_back(last);
  }
  result.tokens = prefix;
  result.hw = collected.empty()
                  ? nn::Tensor::zeros({0, static_cast<std::size_t>(cfg_.dim)})
                  : nn::concat_rows(collected);
  result.truncated = true;
  return result;
}

// ---- TTSModel ----

TTSModel::TTSModel(nn::ParamStore& store, const std::string& prefix,
                   const ModelConfig& cfg, std::size_t base_count,
                   std::size_t signal_dim, RngState& rng)
    : cfg_(cfg) {
  auto dim = static_cast<std::size_t>(cfg.effective_tts_dim());
  emb_ = store.create(prefix + ".emb", {base_count, dim},
                      nn::normal_init(1.0 / std::sqrt(double(dim)), rng));
  enc_ = nn::TransformerEncoder(store, prefix + ".enc",
                                static_cast<std::size_t>(cfg.tts_enc_layers),
                                dim, static_cast<std::size_t>(cfg.heads),
                                static_cast<std::size_t>(cfg.ffn_dim), rng);
  dur1_ = nn::Linear(store, prefix + ".dur1", dim,
                     static_cast<std::size_t>(cfg.dur_hidden), rng);
  dur2_ = nn::Linear(store, prefix + ".dur2",
                     static_cast<std::size_t>(cfg.dur_hidden), 1, rng);
  dec_ = nn::TransformerEncoder(store, prefix + ".dec",
                                static_cast<std::size_t>(cfg.tts_dec_layers),
                                dim, static_cast<std::size_t>(cfg.heads),
                                static_cast<std::size_t>(cfg.ffn_dim), rng);
  out_ = nn::Linear(store, prefix + ".out", dim, signal_dim, rng);
}

nn::Tensor TTSModel::encode_embedding(const std::vector<int>& yv,
                                      RngState& rng, bool train) const {
  CTCB_CHECK(!yv.empty(), "tts encode: empty token sequence");
  nn::Tensor x = nn::embedding(emb_, yv);
  x = nn::add(x, nn::pos_encoding(x.rows(), x.cols()));
  x = nn::dropout(x, cfg_.dropout, rng, train);
  return enc_(x, cfg_.dropout, rng, train);
}

nn::Tensor TTSModel::encode_states(const nn::Tensor& hv, RngState& rng,
                                   bool train) const {
  CTCB_CHECK(hv.rows() >= 1, "tts encode: empty state sequence");
  nn::Tensor x = nn::add(hv, nn::pos_encoding(hv.rows(), hv.cols()));
  x = nn::dropout(x, cfg_.dropout, rng, train);
  return enc_(x, cfg_.dropout, rng, train);
}

nn::Tensor TTSModel::predict_log_durations(const nn::Tensor& encoded,
                                           RngState& rng, bool train) const {
  nn::Tensor h = nn::dropout(nn::gelu(dur1_(encoded)), cfg_.dropout, rng,
                             train);
  return nn::reshape(dur2_(h), {encoded.rows()});
}

nn::Tensor TTSModel::decode_frames(const nn::Tensor& encoded,
                                   const std::vector<int>& durations,
                                   RngState& rng, bool train) const {
  CTCB_CHECK(durations.size() == encoded.rows(),
             "decode_frames: ", durations.size(), " durations for ",
             encoded.rows(), " positions");
  nn::Tensor expanded = nn::repeat_rows(encoded, durations);
  CTCB_CHECK(expanded.rows() >= 1, "decode_frames: zero total duration");
  nn::Tensor x = nn::add(expanded,
                         nn::pos_encoding(expanded.rows(), expanded.cols()));
  x = nn::dropout(x, cfg_.dropout, rng, train);
  return out_(dec_(x, cfg_.dropout, rng, train));
}

// ---- ComposedModel ----

ComposedModel::ComposedModel(const ModelConfig& model_cfg,
                             const adaptor::AdaptorConfig& adaptor_cfg,
                             std::size_t frame_dim,
                             std::size_t subword_count,
                             std::size_t base_count, std::size_t signal_dim,
                             std::uint64_t seed)
    : model_cfg_(model_cfg), adaptor_cfg_(adaptor_cfg), init_rng_(seed) {
  model_cfg_.validate();
  adaptor_cfg_.validate();
  // The adaptor consumes the first-pass decoder states directly, so its
  // width is pinned to the decoder width.
  CTCB_CHECK(adaptor_cfg_.model_dim == model_cfg_.dim,
             "adaptor model_dim ", adaptor_cfg_.model_dim,
             " must equal the first-pass decoder dim ", model_cfg_.dim);
  adaptor_cfg_.dropout = model_cfg_.dropout;
  s2tt_ = std::make_unique<S2TTModel>(store_, "f", model_cfg_, frame_dim,
                                      subword_count, init_rng_);
  adaptor_ = std::make_unique<adaptor::VocabAdaptor>(
      store_, "adaptor", adaptor_cfg_, base_count, init_rng_);
  tts_ = std::make_unique<TTSModel>(store_, "g", model_cfg_, base_count,
                                    signal_dim, init_rng_);
  if (model_cfg_.effective_tts_dim() != model_cfg_.dim) {
    bridge_ = nn::Linear(store_, "bridge",
                         static_cast<std::size_t>(model_cfg_.dim),
                         static_cast<std::size_t>(
                             model_cfg_.effective_tts_dim()),
                         init_rng_);
  }
}

nn::Tensor ComposedModel::bridge(const nn::Tensor& hv) const {
  return bridge_ ? (*bridge_)(hv) : hv;
}

// ---- losses ----

LossParts& LossParts::operator+=(const LossParts& other) {
  s2tt += other.s2tt;
  ctc += other.ctc;
  tts_l1 += other.tts_l1;
  tts_dur += other.tts_dur;
  align_value += other.align_value;
  total += other.total;
  return *this;
}

LossParts& LossParts::operator/=(double n) {
  s2tt /= n;
  ctc /= n;
  tts_l1 /= n;
  tts_dur /= n;
  align_value /= n;
  total /= n;
  return *this;
}

nn::Tensor label_smoothed_ce(const nn::Tensor& log_probs,
                             const std::vector<int>& targets, double eps) {
  CTCB_CHECK(log_probs.rows() == targets.size(),
             "label_smoothed_ce: ", targets.size(), " targets for ",
             log_probs.rows(), " rows");
  nn::Tensor picked = nn::rows_gather(log_probs, targets);
  nn::Tensor nll = nn::scale(nn::mean(picked), -(1.0 - eps));
  if (eps == 0.0) return nll;
  // Smoothing mass spread uniformly over the output vocabulary.
  return nn::add(nll, nn::scale(nn::mean(log_probs), -eps));
}

S2TTForward s2tt_loss(const S2TTModel& model, const synth::Triple& sample,
                      double label_smoothing, RngState& rng, bool train) {
  CTCB_CHECK(sample.has_source, "s2tt_loss: sample lacks source frames");
  CTCB_CHECK(!sample.yw.empty(), "s2tt_loss: empty target");
  nn::Tensor memory = model.encode(sample.source, rng, train);
  nn::Tensor states = model.decode_states(memory, sample.yw, rng, train);
  nn::Tensor log_probs = nn::log_softmax_rows(model.output_logits(states));

  std::vector<int> targets = sample.yw;
  targets.push_back(model.eos_id());
  S2TTForward out;
  out.loss = label_smoothed_ce(log_probs, targets, label_smoothing);
  out.hw = nn::slice_rows(states, 0, sample.yw.size());
  return out;
}

TTSForward tts_loss(const TTSModel& model, const nn::Tensor& encoded,
                    const synth::Triple& sample, RngState& rng, bool train) {
  CTCB_CHECK(sample.has_signal, "tts_loss: sample lacks a target signal");
  CTCB_CHECK(sample.durations.size() == encoded.rows(),
             "tts_loss: duration/position mismatch");
  nn::Tensor log_dur = model.predict_log_durations(encoded, rng, train);
  std::size_t m = sample.durations.size();
  std::vector<double> ref_log(m);
  for (std::size_t i = 0; i < m; ++i)
    ref_log[i] = std::log(static_cast<double>(sample.durations[i]));
  nn::Tensor dur_diff =
      nn::sub(log_dur, nn::Tensor::from_data({m}, std::move(ref_log)));
  nn::Tensor dur_loss = nn::mean(nn::mul(dur_diff, dur_diff));

  nn::Tensor frames = model.decode_frames(encoded, sample.durations, rng,
                                          train);
  CTCB_CHECK(frames.shape() == sample.signal.shape(),
             "tts_loss: rendered shape ", nn::shape_str(frames.shape()),
             " vs signal ", nn::shape_str(sample.signal.shape()));
  nn::Tensor l1 = nn::mean(nn::abs(nn::sub(frames, sample.signal)));

  TTSForward out;
  out.loss = nn::add(l1, dur_loss);
  out.l1 = l1.item();
  out.dur = dur_loss.item();
  return out;
}

SampleLoss supervised_loss(const ComposedModel& model,
                           const synth::Triple& sample, double gamma,
                           RngState& rng, bool train) {
  auto first = s2tt_loss(model.s2tt(), sample, model.config().label_smoothing,
                         rng, train);
  auto adapted = model.vocab_adaptor().adapt_train(first.hw, sample.yv, rng,
                                                   train);
  nn::Tensor encoded = model.tts().encode_states(model.bridge(adapted.hv),
                                                 rng, train);
  auto synth_fwd = tts_loss(model.tts(), encoded, sample, rng, train);

  SampleLoss out;
  nn::Tensor tts_term =
      gamma == 1.0 ? synth_fwd.loss : nn::scale(synth_fwd.loss, gamma);
  out.loss = nn::add(nn::add(first.loss, adapted.ctc_loss), tts_term);
  out.parts.s2tt = first.loss.item();
  out.parts.ctc = adapted.ctc_loss.item();
  out.parts.tts_l1 = synth_fwd.l1;
  out.parts.tts_dur = synth_fwd.dur;
  out.parts.total = out.loss.item();
  return out;
}

SampleLoss zs_stage1_loss(const ComposedModel& model,
                          const synth::Triple& sample, RngState& rng,
                          bool train) {
  auto first = s2tt_loss(model.s2tt(), sample, model.config().label_smoothing,
                         rng, train);
  auto adapted = model.vocab_adaptor().adapt_train(first.hw, sample.yv, rng,
                                                   train);
  SampleLoss out;
  out.loss = nn::add(first.loss, adapted.ctc_loss);
  out.parts.s2tt = first.loss.item();
  out.parts.ctc = adapted.ctc_loss.item();
  out.parts.total = out.loss.item();
  return out;
}

SampleLoss zs_stage2_s2tt_loss(const ComposedModel& model,
                               const synth::Triple& sample,
                               const align::AlignConfig& align_cfg,
                               RngState& rng, bool train) {
  auto first = s2tt_loss(model.s2tt(), sample, model.config().label_smoothing,
                         rng, train);
  auto adapted = model.vocab_adaptor().adapt_train(first.hw, sample.yv, rng,
                                                   train);
  align::EncoderPair pair;
  pair.ch = model.tts().encode_states(model.bridge(adapted.hv), rng, train);
  pair.ce = model.tts().encode_embedding(sample.yv, rng, train);
  nn::Tensor align_term = align::align_loss(pair, align_cfg);

  SampleLoss out;
  out.loss = nn::add(nn::add(first.loss, adapted.ctc_loss), align_term);
  out.parts.s2tt = first.loss.item();
  out.parts.ctc = adapted.ctc_loss.item();
  out.parts.align_value = align_term.item();
  out.parts.total = out.loss.item();
  out.pair = std::move(pair);
  return out;
}

SampleLoss zs_stage2_tts_loss(const ComposedModel& model,
                              const synth::Triple& sample, RngState& rng,
                              bool train) {
  nn::Tensor encoded = model.tts().encode_embedding(sample.yv, rng, train);
  auto synth_fwd = tts_loss(model.tts(), encoded, sample, rng, train);
  SampleLoss out;
  out.loss = synth_fwd.loss;
  out.parts.tts_l1 = synth_fwd.l1;
  out.parts.tts_dur = synth_fwd.dur;
  out.parts.total = synth_fwd.loss.item();
  return out;
}

align::EncoderPair encoder_pair(const ComposedModel& model,
                                const synth::Triple& sample, RngState& rng,
                                bool train) {
  auto first = s2tt_loss(model.s2tt(), sample, model.config().label_smoothing,
                         rng, train);
  auto adapted = model.vocab_adaptor().adapt_train(first.hw, sample.yv, rng,
                                                   train);
  align::EncoderPair pair;
  pair.ch = model.tts().encode_states(model.bridge(adapted.hv), rng, train);
  pair.ce = model.tts().encode_embedding(sample.yv, rng, train);
  return pair;
}

// ---- inference ----

namespace {

std::vector<int> rounded_durations(const nn::Tensor& log_dur) {
  // Clamp to a generous range so a badly calibrated predictor cannot
  // request an absurd expansion.
  constexpr double kMaxLogDur = 4.0;  // ~55 frames per token
  std::vector<int> out(log_dur.size());
  for (std::size_t i = 0; i < log_dur.size(); ++i) {
    double ld = std::min(log_dur.at(i), kMaxLogDur);
    out[i] = std::max(1, static_cast<int>(std::lround(std::exp(ld))));
  }
  return out;
}

InferenceResult synthesize(const ComposedModel& model,
                           const nn::Tensor& encoded,
                           std::vector<int> predicted,
                           std::vector<int> yw_tokens) {
  RngState rng(0);
  InferenceResult out;
  out.predicted = std::move(predicted);
  out.yw_tokens = std::move(yw_tokens);
  nn::Tensor log_dur = model.tts().predict_log_durations(
      encoded, rng, false);
  out.durations = rounded_durations(log_dur);
  out.signal = model.tts().decode_frames(encoded, out.durations, rng, false);
  return out;
}

}  // namespace

InferenceResult infer_s2st(const ComposedModel& model,
                           const nn::Tensor& source) {
  RngState rng(0);
  auto decoded = model.s2tt().greedy_decode(source, rng);
  if (decoded.tokens.empty()) {
    InferenceResult out;
    out.empty_output = true;
    out.signal = nn::Tensor::zeros({0, 1});
    return out;
  }
  auto adapted = model.vocab_adaptor().adapt_infer(decoded.hw, rng);
  if (adapted.predicted.empty()) {
    InferenceResult out;
    out.yw_tokens = decoded.tokens;
    out.empty_output = true;
    out.signal = nn::Tensor::zeros({0, 1});
    return out;
  }
  nn::Tensor encoded = model.tts().encode_states(model.bridge(adapted.hv),
                                                 rng, false);
  return synthesize(model, encoded, adapted.predicted, decoded.tokens);
}

InferenceResult cascade_infer(const ComposedModel& model,
                              const nn::Tensor& source,
                              const vocab::SubwordVocab& subwords,
                              const vocab::BaseVocab& base) {
  RngState rng(0);
  auto decoded = model.s2tt().greedy_decode(source, rng);
  if (decoded.tokens.empty()) {
    InferenceResult out;
    out.empty_output = true;
    out.signal = nn::Tensor::zeros({0, 1});
    return out;
  }
  // Exact "grapheme-to-phoneme": detokenize and retokenize per symbol.
  std::string text =
      subwords.detokenize({decoded.tokens, vocab::VocabTag::kSubword});
  std::vector<int> yv = base.tokenize(text).ids;
  if (yv.empty()) {
    InferenceResult out;
    out.yw_tokens = decoded.tokens;
    out.empty_output = true;
    out.signal = nn::Tensor::zeros({0, 1});
    return out;
  }
  nn::Tensor encoded = model.tts().encode_embedding(yv, rng, false);
  return synthesize(model, encoded, yv, decoded.tokens);
}

// ---- evaluation ----

InferenceMode inference_mode_from_name(const std::string& name) {
  if (name == "pipeline" || name == "zeroshot" || name == "supervised")
    return InferenceMode::kPipeline;
  if (name == "cascade") return InferenceMode::kCascade;
  if (name == "groundtruth") return InferenceMode::kGroundTruth;
  throw ConfigError("unknown inference mode '" + name + "'");
}

std::string inference_mode_name(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::kPipeline:
      return "pipeline";
    case InferenceMode::kCascade:
      return "cascade";
    case InferenceMode::kGroundTruth:
      return "groundtruth";
  }
  return "unknown";
}

EvalMetrics evaluate(const ComposedModel& model,
                     const std::vector<synth::Triple>& samples,
                     const synth::Lexicon& lexicon,
                     const vocab::SubwordVocab& subwords,
                     const vocab::BaseVocab& base, InferenceMode mode) {
  EvalMetrics out;
  metrics::SequenceScorer scorer;
  std::vector<align::EncoderPair> pairs;
  std::size_t empty = 0;
  RngState rng(0);
  for (const auto& sample : samples) {
    std::vector<int> hyp;
    if (mode == InferenceMode::kGroundTruth) {
      CTCB_CHECK(sample.has_signal, "groundtruth eval needs signals");
      hyp = lexicon.oracle_asr(sample.signal);
    } else {
      CTCB_CHECK(sample.has_source, "inference eval needs source frames");
      InferenceResult result =
          mode == InferenceMode::kPipeline
              ? infer_s2st(model, sample.source)
              : cascade_infer(model, sample.source, subwords, base);
      if (result.empty_output) ++empty;
      hyp = lexicon.oracle_asr(result.signal);
    }
    scorer.add(hyp, sample.yv);
    if (mode != InferenceMode::kGroundTruth && sample.has_source)
      pairs.push_back(encoder_pair(model, sample, rng, false));
    ++out.samples;
  }
  out.token_accuracy = scorer.token_accuracy();
  out.ngram_score = scorer.ngram_score();
  out.alignment = align::alignment_metric(pairs);
  out.uniformity = align::uniformity_metric(pairs);
  out.empty_output_rate =
      out.samples == 0 ? 0.0
                       : static_cast<double>(empty) /
                             static_cast<double>(out.samples);
  return out;
}

}  // namespace ctcbridge::pipeline

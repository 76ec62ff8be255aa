// ctcbridge/synth.hpp
//
// Synthetic corpus: source frame sequences, dual-tokenized target text,
// continuous target signals with per-symbol durations, and the zero-shot
// split discipline (translation and synthesis splits share no target
// text). Includes the exact nearest-prototype decoder used as the
// evaluation "recognizer".

#ifndef CTCBRIDGE_SYNTH_HPP_
#define CTCBRIDGE_SYNTH_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctcbridge/tensor.hpp"
#include "ctcbridge/vocab.hpp"

namespace ctcbridge::synth {

struct SplitSizes {
  std::size_t s2tt_train = 2000;
  std::size_t s2tt_dev = 128;
  std::size_t tts_train = 2000;
  std::size_t tts_dev = 128;
  std::size_t s2st_train = 2000;
  std::size_t s2st_dev = 128;
  std::size_t test = 256;
};

struct SynthTaskSpec {
  std::size_t base_vocab_size = 12;
  std::size_t source_vocab_size = 12;
  std::uint64_t lexicon_seed = 17;
  std::size_t frame_dim = 16;
  std::size_t frames_per_source_token = 3;
  std::size_t signal_dim = 16;
  double noise_sigma = 0.1;
  double source_noise_sigma = 0.3;
  std::size_t min_source_len = 2;
  std::size_t max_source_len = 5;
  SplitSizes sizes;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static SynthTaskSpec from_json(const nlohmann::json& j);
};

struct Triple {
  nn::Tensor source;            // [Ts x frame_dim] when present
  std::string text;             // target base-symbol string
  std::vector<int> yw;          // subword tokenization
  std::vector<int> yv;          // base tokenization
  nn::Tensor signal;            // [Tt x signal_dim] when present
  std::vector<int> durations;   // per yv token, sums to Tt
  bool has_source = false;
  bool has_signal = false;
};

// Everything drawn once from the lexicon seed: the source-token to
// target-string substitution map, per-symbol durations, and the prototype
// vectors behind source frames and target signals.
class Lexicon {
 public:
  explicit Lexicon(const SynthTaskSpec& spec);

  const std::string& substitution(int source_token) const;
  int duration(int symbol_id) const;  // in {2, 3, 4}

  // Prototype tiling plus Gaussian noise; durations out-param receives the
  // per-symbol frame counts.
  nn::Tensor render_signal(const std::vector<int>& yv, double sigma,
                           RngState& rng,
                           std::vector<int>* durations = nullptr) const;
  nn::Tensor render_source(const std::vector<int>& source_tokens,
                           double sigma, RngState& rng) const;

  // Nearest-prototype classification per frame, then run collapse with
  // runs shorter than two frames dropped as noise.
  std::vector<int> oracle_asr(const nn::Tensor& signal) const;

  const std::vector<std::string>& substitutions() const { return subst_; }
  const std::vector<int>& symbol_durations() const { return durations_; }

 private:
  SynthTaskSpec spec_;
  std::vector<std::string> subst_;       // per source token
  std::vector<int> durations_;           // per base symbol
  std::vector<double> signal_protos_;    // [base_vocab x signal_dim]
  std::vector<double> source_protos_;    // [source_vocab x frame_dim]
};

struct Corpus {
  SynthTaskSpec spec;
  vocab::BaseVocab base = vocab::BaseVocab::make_default();
  vocab::SubwordVocab subwords{base, {"a", "b", "c", "d", "e", "f", "g", "h",
                                      "i", "j", "k", "l"}};
  std::map<std::string, std::vector<Triple>> splits;
};

// Deterministic per (spec, seed). Split target texts are pairwise
// disjoint; in particular the translation and synthesis splits share none.
Corpus gen_corpus(const SynthTaskSpec& spec, std::uint64_t seed);

struct ValidationReport {
  std::size_t triples_checked = 0;
  std::size_t recovery_checked = 0;
  std::size_t recovery_exact = 0;
  double recovery_rate = 1.0;
  bool disjoint_texts = false;
  std::vector<std::string> errors;

  bool ok() const { return errors.empty(); }
};
ValidationReport validate_corpus(const Corpus& corpus);

void write_corpus(const Corpus& corpus, const std::string& dir);

// Reads a corpus directory; every split access lands in the audit log, and
// loads matching a forbidden prefix raise InvariantBreach.
class CorpusReader {
 public:
  explicit CorpusReader(const std::string& dir);

  const SynthTaskSpec& spec() const { return spec_; }
  const vocab::BaseVocab& base() const { return base_; }
  const vocab::SubwordVocab& subwords() const { return subwords_; }
  const Lexicon& lexicon() const { return lexicon_; }

  std::vector<std::string> split_names() const;
  bool has_split(const std::string& name) const;
  std::size_t split_size(const std::string& name) const;
  std::vector<Triple> load_split(const std::string& name);

  void forbid_prefix(const std::string& prefix);
  const std::vector<std::string>& audit_log() const { return audit_; }

 private:
  std::string dir_;
  SynthTaskSpec spec_;
  vocab::BaseVocab base_;
  vocab::SubwordVocab subwords_;
  Lexicon lexicon_;
  std::map<std::string, std::size_t> split_counts_;
  std::vector<std::string> forbidden_;
  std::vector<std::string> audit_;
};

}  // namespace ctcbridge::synth

#endif  // CTCBRIDGE_SYNTH_HPP_

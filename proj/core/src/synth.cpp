// core/src/synth.cpp

#include "ctcbridge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ctcbridge/layers.hpp"

namespace ctcbridge::synth {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void SynthTaskSpec::validate() const {
  if (noise_sigma < 0.0 || source_noise_sigma < 0.0)
    throw ConfigError("noise sigma must be nonnegative");
  if (base_vocab_size < 2 || base_vocab_size > 26)
    throw ConfigError("base_vocab_size must be in [2, 26]");
  if (source_vocab_size < 1)
    throw ConfigError("source_vocab_size must be positive");
  if (frame_dim < 1 || signal_dim < 1)
    throw ConfigError("frame_dim and signal_dim must be positive");
  if (frames_per_source_token < 1)
    throw ConfigError("frames_per_source_token must be positive");
  if (min_source_len < 1 || max_source_len < min_source_len)
    throw ConfigError("source length range is empty");
  if (sizes.s2tt_train == 0 || sizes.tts_train == 0 || sizes.test == 0)
    throw ConfigError("corpus split sizes must be positive");
}

ordered_json SynthTaskSpec::to_json() const {
  ordered_json j;
  j["base_vocab_size"] = base_vocab_size;
  j["source_vocab_size"] = source_vocab_size;
  j["lexicon_seed"] = lexicon_seed;
  j["frame_dim"] = frame_dim;
  j["frames_per_source_token"] = frames_per_source_token;
  j["signal_dim"] = signal_dim;
  j["noise_sigma"] = noise_sigma;
  j["source_noise_sigma"] = source_noise_sigma;
  j["min_source_len"] = min_source_len;
  j["max_source_len"] = max_source_len;
  ordered_json s;
  s["s2tt_train"] = sizes.s2tt_train;
  s["s2tt_dev"] = sizes.s2tt_dev;
  s["tts_train"] = sizes.tts_train;
  s["tts_dev"] = sizes.tts_dev;
  s["s2st_train"] = sizes.s2st_train;
  s["s2st_dev"] = sizes.s2st_dev;
  s["test"] = sizes.test;
  j["sizes"] = s;
  return j;
}

SynthTaskSpec SynthTaskSpec::from_json(const json& j) {
  SynthTaskSpec spec;
  spec.base_vocab_size = j.value("base_vocab_size", spec.base_vocab_size);
  spec.source_vocab_size =
      j.value("source_vocab_size", spec.source_vocab_size);
  spec.lexicon_seed = j.value("lexicon_seed", spec.lexicon_seed);
  spec.frame_dim = j.value("frame_dim", spec.frame_dim);
  spec.frames_per_source_token =
      j.value("frames_per_source_token", spec.frames_per_source_token);
  spec.signal_dim = j.value("signal_dim", spec.signal_dim);
  spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
  spec.source_noise_sigma =
      j.value("source_noise_sigma", spec.source_noise_sigma);
  spec.min_source_len = j.value("min_source_len", spec.min_source_len);
  spec.max_source_len = j.value("max_source_len", spec.max_source_len);
  if (j.contains("sizes")) {
    const auto& s = j.at("sizes");
    spec.sizes.s2tt_train = s.value("s2tt_train", spec.sizes.s2tt_train);
    spec.sizes.s2tt_dev = s.value("s2tt_dev", spec.sizes.s2tt_dev);
    spec.sizes.tts_train = s.value("tts_train", spec.sizes.tts_train);
    spec.sizes.tts_dev = s.value("tts_dev", spec.sizes.tts_dev);
    spec.sizes.s2st_train = s.value("s2st_train", spec.sizes.s2st_train);
    spec.sizes.s2st_dev = s.value("s2st_dev", spec.sizes.s2st_dev);
    spec.sizes.test = s.value("test", spec.sizes.test);
  }
  return spec;
}

// ---- Lexicon ----

Lexicon::Lexicon(const SynthTaskSpec& spec) : spec_(spec) {
  spec_.validate();
  RngState rng(spec_.lexicon_seed);
  std::size_t k = spec_.base_vocab_size;

  // Substitution strings start in the first half of the alphabet and end
  // in the second half, so concatenations never create adjacent repeats
  // and the rendered signal stays decodable by run collapse.
  std::size_t half = k / 2;
  std::set<std::string> seen;
  for (std::size_t u = 0; u < spec_.source_vocab_size; ++u) {
    std::string s;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      bool three = rng.uniform() < 0.25;
      char first = static_cast<char>('a' + rng.uniform_int(half));
      char last = static_cast<char>('a' + half + rng.uniform_int(k - half));
      if (three) {
        char mid;
        do {
          mid = static_cast<char>('a' + rng.uniform_int(k));
        } while (mid == first || mid == last);
        s = {first, mid, last};
      } else {
        s = {first, last};
      }
      if (seen.insert(s).second) break;
      s.clear();
    }
    if (s.empty())
      throw ConfigError("cannot draw distinct substitution strings");
    subst_.push_back(s);
  }

  durations_.resize(k);
  for (std::size_t i = 0; i < k; ++i)
    durations_[i] = 2 + static_cast<int>(rng.uniform_int(3));

  // Target prototypes must stay separable under the rendering noise.
  double min_dist = 4.0 * spec_.noise_sigma *
                    std::sqrt(static_cast<double>(spec_.signal_dim));
  signal_protos_.resize(k * spec_.signal_dim);
  for (std::size_t i = 0; i < k; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      for (std::size_t d = 0; d < spec_.signal_dim; ++d)
        signal_protos_[i * spec_.signal_dim + d] = rng.normal();
      placed = true;
      for (std::size_t p = 0; p < i && placed; ++p) {
        double dist2 = 0.0;
        for (std::size_t d = 0; d < spec_.signal_dim; ++d) {
          double diff = signal_protos_[i * spec_.signal_dim + d] -
                        signal_protos_[p * spec_.signal_dim + d];
          dist2 += diff * diff;
        }
        placed = dist2 >= min_dist * min_dist;
      }
    }
    if (!placed)
      throw ConfigError(
          "prototype separation unattainable for the given noise sigma");
  }

  source_protos_.resize(spec_.source_vocab_size * spec_.frame_dim);
  for (auto& x : source_protos_) x = rng.normal();
}

const std::string& Lexicon::substitution(int source_token) const {
  CTCB_CHECK(source_token >= 0 &&
                 static_cast<std::size_t>(source_token) < subst_.size(),
             "source token ", source_token, " out of range");
  return subst_[static_cast<std::size_t>(source_token)];
}

int Lexicon::duration(int symbol_id) const {
  CTCB_CHECK(symbol_id >= 0 &&
                 static_cast<std::size_t>(symbol_id) < durations_.size(),
             "symbol id ", symbol_id, " out of range");
  return durations_[static_cast<std::size_t>(symbol_id)];
}

nn::Tensor Lexicon::render_signal(const std::vector<int>& yv, double sigma,
                                  RngState& rng,
                                  std::vector<int>* durations) const {
  CTCB_CHECK(!yv.empty(), "render_signal: empty target");
  std::size_t total = 0;
  std::vector<int> durs;
  durs.reserve(yv.size());
  for (int sym : yv) {
    durs.push_back(duration(sym));
    total += static_cast<std::size_t>(durs.back());
  }
  std::vector<double> data(total * spec_.signal_dim);
  std::size_t row = 0;
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double* proto =
        &signal_protos_[static_cast<std::size_t>(yv[i]) * spec_.signal_dim];
    for (int r = 0; r < durs[i]; ++r, ++row)
      for (std::size_t d = 0; d < spec_.signal_dim; ++d)
        data[row * spec_.signal_dim + d] = proto[d] + sigma * rng.normal();
  }
  if (durations) *durations = std::move(durs);
  return nn::Tensor::from_data({total, spec_.signal_dim}, std::move(data));
}

nn::Tensor Lexicon::render_source(const std::vector<int>& source_tokens,
                                  double sigma, RngState& rng) const {
  CTCB_CHECK(!source_tokens.empty(), "render_source: empty sentence");
  std::size_t rows = source_tokens.size() * spec_.frames_per_source_token;
  std::vector<double> data(rows * spec_.frame_dim);
  std::size_t row = 0;
  for (int tok : source_tokens) {
    CTCB_CHECK(tok >= 0 && static_cast<std::size_t>(tok) <
                               spec_.source_vocab_size,
               "source token out of range");
    const double* proto =
        &source_protos_[static_cast<std::size_t>(tok) * spec_.frame_dim];
    for (std::size_t r = 0; r < spec_.frames_per_source_token; ++r, ++row)
      for (std::size_t d = 0; d < spec_.frame_dim; ++d)
        data[row * spec_.frame_dim + d] = proto[d] + sigma * rng.normal();
  }
  return nn::Tensor::from_data({rows, spec_.frame_dim}, std::move(data));
}

std::vector<int> Lexicon::oracle_asr(const nn::Tensor& signal) const {
  if (signal.size() == 0) return {};
  CTCB_CHECK(signal.cols() == spec_.signal_dim,
             "oracle_asr: signal dim ", signal.cols(), " != ",
             spec_.signal_dim);
  std::size_t k = spec_.base_vocab_size;
  std::vector<int> frame_syms(signal.rows());
  for (std::size_t t = 0; t < signal.rows(); ++t) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < k; ++p) {
      double dist2 = 0.0;
      for (std::size_t d = 0; d < spec_.signal_dim; ++d) {
        double diff =
            signal.at(t, d) - signal_protos_[p * spec_.signal_dim + d];
        dist2 += diff * diff;
      }
      if (dist2 < best_dist) {
        best_dist = dist2;
        best = static_cast<int>(p);
      }
    }
    frame_syms[t] = best;
  }
  // One token per run; runs shorter than two frames are dropped as noise.
  std::vector<int> tokens;
  std::size_t i = 0;
  while (i < frame_syms.size()) {
    std::size_t j = i;
    while (j + 1 < frame_syms.size() && frame_syms[j + 1] == frame_syms[i])
      ++j;
    if (j - i + 1 >= 2) tokens.push_back(frame_syms[i]);
    i = j + 1;
  }
  return tokens;
}

// ---- corpus generation ----

Corpus gen_corpus(const SynthTaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  Lexicon lexicon(spec);
  RngState rng(seed);

  struct Draft {
    std::vector<int> source_tokens;
    std::string text;
  };
  const std::vector<std::pair<std::string, std::size_t>> split_plan = {
      {"s2tt_train", spec.sizes.s2tt_train},
      {"s2tt_dev", spec.sizes.s2tt_dev},
      {"tts_train", spec.sizes.tts_train},
      {"tts_dev", spec.sizes.tts_dev},
      {"s2st_train", spec.sizes.s2st_train},
      {"s2st_dev", spec.sizes.s2st_dev},
      {"test", spec.sizes.test},
  };
  std::size_t total_needed = 0;
  for (const auto& [name, count] : split_plan) total_needed += count;

  std::set<std::string> seen;
  std::map<std::string, std::vector<Draft>> drafts;
  std::size_t attempts = 0, attempt_cap = 200 * total_needed + 10000;
  for (const auto& [name, count] : split_plan) {
    auto& bucket = drafts[name];
    while (bucket.size() < count) {
      if (++attempts > attempt_cap)
        throw ConfigError(
            "requested corpus sizes exceed the distinct sentence space");
      std::size_t len = spec.min_source_len +
                        rng.uniform_int(spec.max_source_len -
                                        spec.min_source_len + 1);
      Draft d;
      d.source_tokens.resize(len);
      for (auto& t : d.source_tokens)
        t = static_cast<int>(rng.uniform_int(spec.source_vocab_size));
      for (int t : d.source_tokens) d.text += lexicon.substitution(t);
      if (!seen.insert(d.text).second) continue;
      bucket.push_back(std::move(d));
    }
  }

  Corpus corpus;
  corpus.spec = spec;
  corpus.base = vocab::BaseVocab::make_default(spec.base_vocab_size);
  std::vector<std::string> all_texts;
  all_texts.reserve(total_needed);
  for (const auto& [name, count] : split_plan)
    for (const auto& d : drafts[name]) all_texts.push_back(d.text);
  corpus.subwords = vocab::SubwordVocab::from_texts(corpus.base, all_texts);

  for (const auto& [name, count] : split_plan) {
    bool wants_source = name.rfind("tts", 0) != 0;
    bool wants_signal = name.rfind("s2tt", 0) != 0;
    auto& out = corpus.splits[name];
    out.reserve(count);
    for (const auto& d : drafts[name]) {
      Triple t;
      t.text = d.text;
      t.yw = corpus.subwords.tokenize(d.text).ids;
      t.yv = corpus.base.tokenize(d.text).ids;
      if (wants_source) {
        t.source = lexicon.render_source(d.source_tokens,
                                         spec.source_noise_sigma, rng);
        t.has_source = true;
      }
      if (wants_signal) {
        t.signal = lexicon.render_signal(t.yv, spec.noise_sigma, rng,
                                         &t.durations);
        t.has_signal = true;
      }
      out.push_back(std::move(t));
    }
  }
  return corpus;
}

ValidationReport validate_corpus(const Corpus& corpus) {
  ValidationReport report;
  Lexicon lexicon(corpus.spec);

  std::set<std::string> s2tt_texts, tts_texts;
  for (const auto& [name, triples] : corpus.splits) {
    bool is_s2tt = name.rfind("s2tt", 0) == 0;
    bool is_tts = name.rfind("tts", 0) == 0;
    for (const auto& t : triples) {
      ++report.triples_checked;
      if (is_s2tt) s2tt_texts.insert(t.text);
      if (is_tts) tts_texts.insert(t.text);
      if (corpus.subwords.detokenize({t.yw, vocab::VocabTag::kSubword}) !=
          t.text)
        report.errors.push_back("subword tokenization mismatch: " + t.text);
      if (corpus.base.detokenize({t.yv, vocab::VocabTag::kBase}) != t.text)
        report.errors.push_back("base tokenization mismatch: " + t.text);
      if (t.has_signal) {
        std::size_t total = 0;
        for (int d : t.durations) total += static_cast<std::size_t>(d);
        if (t.durations.size() != t.yv.size() || total != t.signal.rows())
          report.errors.push_back("duration sum mismatch: " + t.text);
        ++report.recovery_checked;
        if (lexicon.oracle_asr(t.signal) == t.yv) ++report.recovery_exact;
      }
      if (t.has_source && t.source.rows() == 0)
        report.errors.push_back("empty source: " + t.text);
    }
  }
  report.disjoint_texts = true;
  for (const auto& text : s2tt_texts)
    if (tts_texts.count(text)) {
      report.disjoint_texts = false;
      report.errors.push_back("text shared across s2tt and tts: " + text);
      break;
    }
  if (report.recovery_checked > 0)
    report.recovery_rate = static_cast<double>(report.recovery_exact) /
                           static_cast<double>(report.recovery_checked);
  if (report.recovery_rate < 0.99)
    report.errors.push_back("oracle recovery rate below 0.99");
  return report;
}

// ---- serialization ----

void write_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["spec"] = corpus.spec.to_json();
  Lexicon lexicon(corpus.spec);
  manifest["substitution_map"] = lexicon.substitutions();
  manifest["symbol_durations"] = lexicon.symbol_durations();
  manifest["base_vocab"] = "base_vocab.json";
  manifest["subword_vocab"] = "subword_vocab.json";
  ordered_json splits = ordered_json::object();

  ordered_json base_list = ordered_json::array();
  for (char c : corpus.base.symbols()) base_list.push_back(std::string(1, c));
  std::ofstream(dir + "/base_vocab.json") << base_list.dump(2) << '\n';
  ordered_json sw_list(corpus.subwords.units());
  std::ofstream(dir + "/subword_vocab.json") << sw_list.dump(2) << '\n';

  for (const auto& [name, triples] : corpus.splits) {
    ordered_json records = ordered_json::array();
    std::vector<std::pair<std::string, nn::Tensor>> tensors;
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const Triple& t = triples[i];
      ordered_json rec;
      rec["text"] = t.text;
      rec["yw"] = t.yw;
      rec["yv"] = t.yv;
      rec["durations"] = t.durations;
      rec["has_source"] = t.has_source;
      rec["has_signal"] = t.has_signal;
      records.push_back(std::move(rec));
      if (t.has_source)
        tensors.emplace_back(std::to_string(i) + ".S", t.source);
      if (t.has_signal)
        tensors.emplace_back(std::to_string(i) + ".T", t.signal);
    }
    std::ofstream(dir + "/" + name + ".json") << records.dump() << '\n';
    nn::write_tensor_file(dir + "/" + name + ".bin", tensors);
    ordered_json meta;
    meta["records"] = name + ".json";
    meta["tensors"] = name + ".bin";
    meta["count"] = triples.size();
    splits[name] = meta;
  }
  manifest["splits"] = splits;
  std::ofstream(dir + "/manifest.json") << manifest.dump(2) << '\n';
}

CorpusReader::CorpusReader(const std::string& dir)
    : dir_(dir),
      spec_(),
      base_(vocab::BaseVocab::make_default()),
      subwords_(base_, {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j",
                        "k", "l"}),
      lexicon_(SynthTaskSpec{}) {
  std::ifstream mf(dir_ + "/manifest.json");
  if (!mf) throw ConfigError("no corpus manifest under " + dir_);
  json manifest = json::parse(mf);
  spec_ = SynthTaskSpec::from_json(manifest.at("spec"));
  lexicon_ = Lexicon(spec_);

  std::ifstream bf(dir_ + "/" + manifest.at("base_vocab").get<std::string>());
  json base_list = json::parse(bf);
  std::vector<char> symbols;
  for (const auto& s : base_list)
    symbols.push_back(s.get<std::string>().at(0));
  base_ = vocab::BaseVocab(std::move(symbols));

  std::ifstream sf(dir_ + "/" +
                   manifest.at("subword_vocab").get<std::string>());
  json sw_list = json::parse(sf);
  subwords_ = vocab::SubwordVocab(base_,
                                  sw_list.get<std::vector<std::string>>());

  for (const auto& [name, meta] : manifest.at("splits").items())
    split_counts_[name] = meta.at("count").get<std::size_t>();
}

std::vector<std::string> CorpusReader::split_names() const {
  std::vector<std::string> names;
  for (const auto& [name, count] : split_counts_) names.push_back(name);
  return names;
}

bool CorpusReader::has_split(const std::string& name) const {
  return split_counts_.count(name) > 0;
}

std::size_t CorpusReader::split_size(const std::string& name) const {
  auto it = split_counts_.find(name);
  CTCB_CHECK(it != split_counts_.end(), "unknown split '", name, "'");
  return it->second;
}

void CorpusReader::forbid_prefix(const std::string& prefix) {
  forbidden_.push_back(prefix);
}

std::vector<Triple> CorpusReader::load_split(const std::string& name) {
  for (const auto& prefix : forbidden_)
    if (name.rfind(prefix, 0) == 0)
      throw InvariantBreach("attempted to read forbidden split '" + name +
                            "' (zero-shot data discipline)");
  CTCB_CHECK(has_split(name), "unknown split '", name, "'");
  audit_.push_back(name);

  std::ifstream rf(dir_ + "/" + name + ".json");
  if (!rf) throw ConfigError("missing split records for " + name);
  json records = json::parse(rf);
  auto tensors = nn::read_tensor_file(dir_ + "/" + name + ".bin");
  std::map<std::string, nn::Tensor> by_name(tensors.begin(), tensors.end());

  std::vector<Triple> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    Triple t;
    t.text = rec.at("text").get<std::string>();
    t.yw = rec.at("yw").get<std::vector<int>>();
    t.yv = rec.at("yv").get<std::vector<int>>();
    t.durations = rec.at("durations").get<std::vector<int>>();
    t.has_source = rec.at("has_source").get<bool>();
    t.has_signal = rec.at("has_signal").get<bool>();
    if (t.has_source) t.source = by_name.at(std::to_string(i) + ".S");
    if (t.has_signal) t.signal = by_name.at(std::to_string(i) + ".T");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace ctcbridge::synth

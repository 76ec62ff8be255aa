// tests/test_synth.cpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ctcbridge/synth.hpp"

using namespace ctcbridge;
using synth::SynthTaskSpec;

namespace {

SynthTaskSpec small_spec() {
  SynthTaskSpec spec;
  spec.frame_dim = 6;
  spec.signal_dim = 6;
  spec.sizes = {48, 12, 48, 12, 24, 8, 16};
  return spec;
}

}  // namespace

TEST_CASE("corpus generation is deterministic per seed") {
  SynthTaskSpec spec = small_spec();
  auto a = synth::gen_corpus(spec, 7);
  auto b = synth::gen_corpus(spec, 7);
  REQUIRE(a.splits.size() == b.splits.size());
  for (const auto& [name, triples] : a.splits) {
    const auto& other = b.splits.at(name);
    REQUIRE(triples.size() == other.size());
    for (std::size_t i = 0; i < triples.size(); ++i) {
      CHECK(triples[i].text == other[i].text);
      if (triples[i].has_signal)
        CHECK(std::equal(triples[i].signal.value().begin(),
                         triples[i].signal.value().end(),
                         other[i].signal.value().begin()));
    }
  }
  auto c = synth::gen_corpus(spec, 8);
  CHECK(c.splits.at("s2tt_train")[0].text !=
        a.splits.at("s2tt_train")[0].text);
}

TEST_CASE("translation and synthesis splits share no target text") {
  auto corpus = synth::gen_corpus(small_spec(), 3);
  std::set<std::string> s2tt, tts;
  for (const auto& t : corpus.splits.at("s2tt_train")) s2tt.insert(t.text);
  for (const auto& t : corpus.splits.at("s2tt_dev")) s2tt.insert(t.text);
  for (const auto& t : corpus.splits.at("tts_train")) tts.insert(t.text);
  for (const auto& t : corpus.splits.at("tts_dev")) tts.insert(t.text);
  for (const auto& text : s2tt) CHECK(tts.count(text) == 0);
}

TEST_CASE("generated triples satisfy their invariants") {
  auto corpus = synth::gen_corpus(small_spec(), 11);
  auto report = synth::validate_corpus(corpus);
  CHECK(report.ok());
  CHECK(report.disjoint_texts);
  CHECK(report.recovery_rate >= 0.99);
  CHECK(report.triples_checked > 0);
}

TEST_CASE("oversized corpora raise a generation error") {
  SynthTaskSpec spec = small_spec();
  spec.source_vocab_size = 2;
  spec.min_source_len = 1;
  spec.max_source_len = 1;  // at most 2 distinct sentences exist
  spec.sizes = {4, 1, 1, 1, 1, 1, 1};
  CHECK_THROWS_AS(synth::gen_corpus(spec, 1), ConfigError);
}

TEST_CASE("negative noise rejected") {
  SynthTaskSpec spec = small_spec();
  spec.noise_sigma = -0.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("noise-free rendering tiles prototypes exactly") {
  SynthTaskSpec spec = small_spec();
  synth::Lexicon lexicon(spec);
  RngState rng(1);
  std::vector<int> yv = {0, 5, 2};
  std::vector<int> durations;
  auto clean = lexicon.render_signal(yv, 0.0, rng, &durations);
  REQUIRE(durations.size() == 3);
  std::size_t total = 0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    CHECK(durations[i] == lexicon.duration(yv[i]));
    total += static_cast<std::size_t>(durations[i]);
  }
  CHECK(clean.rows() == total);
  // Every frame within a segment is identical at sigma 0.
  std::size_t row = 0;
  for (std::size_t i = 0; i < yv.size(); ++i) {
    for (int r = 1; r < durations[i]; ++r)
      for (std::size_t d = 0; d < clean.cols(); ++d)
        CHECK(clean.at(row + r, d) == clean.at(row, d));
    row += static_cast<std::size_t>(durations[i]);
  }
  CHECK(lexicon.oracle_asr(clean) == yv);
}

TEST_CASE("oracle decoder recovers noisy renderings") {
  SynthTaskSpec spec = small_spec();
  synth::Lexicon lexicon(spec);
  RngState rng(2);
  int exact = 0, total = 1000;
  for (int i = 0; i < total; ++i) {
    std::vector<int> yv;
    std::size_t len = 1 + rng.uniform_int(8);
    while (yv.size() < len) {
      int sym = static_cast<int>(rng.uniform_int(spec.base_vocab_size));
      if (yv.empty() || yv.back() != sym) yv.push_back(sym);
    }
    auto noisy = lexicon.render_signal(yv, spec.noise_sigma, rng);
    if (lexicon.oracle_asr(noisy) == yv) ++exact;
  }
  CHECK(exact >= 990);
}

TEST_CASE("oracle decoder drops single-frame runs and handles empties") {
  SynthTaskSpec spec = small_spec();
  synth::Lexicon lexicon(spec);
  CHECK(lexicon.oracle_asr(nn::Tensor::zeros({0, 6})).empty());
  RngState rng(3);
  auto clean = lexicon.render_signal({0, 1}, 0.0, rng);
  CHECK(lexicon.oracle_asr(clean) == std::vector<int>{0, 1});
  // Splice a single corrupted frame; the stray run must be ignored.
  std::vector<int> yv = {0, 1};
  auto sig = lexicon.render_signal(yv, 0.0, rng);
  auto spliced = sig.mutable_value();
  auto other = lexicon.render_signal({4}, 0.0, rng);
  for (std::size_t d = 0; d < 6; ++d) spliced[d] = other.at(0, d);
  auto tokens = lexicon.oracle_asr(sig);
  CHECK(tokens.size() <= 2);
}

TEST_CASE("substitution strings never create adjacent repeats") {
  SynthTaskSpec spec = small_spec();
  synth::Lexicon lexicon(spec);
  auto corpus = synth::gen_corpus(spec, 5);
  for (const auto& [name, triples] : corpus.splits)
    for (const auto& t : triples)
      for (std::size_t i = 0; i + 1 < t.text.size(); ++i)
        CHECK(t.text[i] != t.text[i + 1]);
}

TEST_CASE("corpus round trips through the directory format") {
  namespace fs = std::filesystem;
  auto dir = (fs::temp_directory_path() / "ctcb_corpus_test").string();
  fs::remove_all(dir);
  auto corpus = synth::gen_corpus(small_spec(), 21);
  synth::write_corpus(corpus, dir);

  synth::CorpusReader reader(dir);
  CHECK(reader.spec().base_vocab_size == corpus.spec.base_vocab_size);
  CHECK(reader.subwords().size() == corpus.subwords.size());
  for (const auto& [name, triples] : corpus.splits) {
    REQUIRE(reader.has_split(name));
    auto loaded = reader.load_split(name);
    REQUIRE(loaded.size() == triples.size());
    for (std::size_t i = 0; i < triples.size(); ++i) {
      CHECK(loaded[i].text == triples[i].text);
      CHECK(loaded[i].yw == triples[i].yw);
      CHECK(loaded[i].yv == triples[i].yv);
      CHECK(loaded[i].has_source == triples[i].has_source);
      CHECK(loaded[i].has_signal == triples[i].has_signal);
      if (triples[i].has_signal) {
        REQUIRE(loaded[i].signal.shape() == triples[i].signal.shape());
        CHECK(std::equal(loaded[i].signal.value().begin(),
                         loaded[i].signal.value().end(),
                         triples[i].signal.value().begin()));
      }
    }
  }
  CHECK(reader.audit_log().size() == corpus.splits.size());
  fs::remove_all(dir);
}

TEST_CASE("rewriting the same corpus is byte identical") {
  namespace fs = std::filesystem;
  auto dir_a = (fs::temp_directory_path() / "ctcb_corpus_a").string();
  auto dir_b = (fs::temp_directory_path() / "ctcb_corpus_b").string();
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  synth::write_corpus(synth::gen_corpus(small_spec(), 9), dir_a);
  synth::write_corpus(synth::gen_corpus(small_spec(), 9), dir_b);
  for (const auto& entry : fs::directory_iterator(dir_a)) {
    auto name = entry.path().filename().string();
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(dir_b + "/" + name, std::ios::binary);
    std::string a((std::istreambuf_iterator<char>(fa)), {});
    std::string b((std::istreambuf_iterator<char>(fb)), {});
    CHECK(a == b);
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("forbidden splits raise and never reach the audit log") {
  namespace fs = std::filesystem;
  auto dir = (fs::temp_directory_path() / "ctcb_corpus_forbid").string();
  fs::remove_all(dir);
  synth::write_corpus(synth::gen_corpus(small_spec(), 2), dir);
  synth::CorpusReader reader(dir);
  reader.forbid_prefix("s2st");
  CHECK_THROWS_AS(reader.load_split("s2st_train"), InvariantBreach);
  CHECK_THROWS_AS(reader.load_split("s2st_dev"), InvariantBreach);
  reader.load_split("s2tt_train");
  for (const auto& name : reader.audit_log())
    CHECK(name.rfind("s2st", 0) != 0);
  fs::remove_all(dir);
}

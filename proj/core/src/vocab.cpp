// core/src/vocab.cpp

#include "ctcbridge/vocab.hpp"

#include <algorithm>
#include <set>

namespace ctcbridge::vocab {

BaseVocab::BaseVocab(std::vector<char> symbols) : symbols_(std::move(symbols)) {
  CTCB_CHECK(!symbols_.empty(), "base vocabulary must not be empty");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    auto [it, inserted] = index_.emplace(symbols_[i], static_cast<int>(i));
    CTCB_CHECK(inserted, "duplicate base symbol '", symbols_[i], "'");
  }
}

BaseVocab BaseVocab::make_default(std::size_t size) {
  CTCB_CHECK(size >= 1 && size <= 26, "default base vocab size ", size,
             " outside [1, 26]");
  std::vector<char> symbols(size);
  for (std::size_t i = 0; i < size; ++i)
    symbols[i] = static_cast<char>('a' + i);
  return BaseVocab(std::move(symbols));
}

char BaseVocab::symbol(int id) const {
  CTCB_CHECK(id >= 0 && static_cast<std::size_t>(id) < symbols_.size(),
             "base symbol id ", id, " out of range");
  return symbols_[static_cast<std::size_t>(id)];
}

int BaseVocab::id_of(char symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? -1 : it->second;
}

TokenSeq BaseVocab::tokenize(const std::string& text) const {
  TokenSeq seq;
  seq.tag = VocabTag::kBase;
  seq.ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    int id = id_of(text[i]);
    if (id < 0) {
      throw TokenizeError(
          format_msg("unknown base symbol '", text[i], "' at position ", i),
          text[i], i);
    }
    seq.ids.push_back(id);
  }
  return seq;
}

std::string BaseVocab::detokenize(const TokenSeq& seq) const {
  CTCB_CHECK(seq.tag == VocabTag::kBase, "detokenize: wrong vocabulary tag");
  std::string out;
  out.reserve(seq.ids.size());
  for (int id : seq.ids) out.push_back(symbol(id));
  return out;
}

SubwordVocab::SubwordVocab(const BaseVocab& base,
                           std::vector<std::string> units)
    : units_(std::move(units)) {
  std::set<char> covered;
  for (std::size_t i = 0; i < units_.size(); ++i) {
    const std::string& u = units_[i];
    CTCB_CHECK(!u.empty(), "empty subword unit");
    for (char c : u)
      CTCB_CHECK(base.id_of(c) >= 0, "subword unit '", u,
                 "' uses unknown base symbol '", c, "'");
    if (u.size() == 1) covered.insert(u[0]);
    auto [it, inserted] = index_.emplace(u, static_cast<int>(i));
    CTCB_CHECK(inserted, "duplicate subword unit '", u, "'");
    max_len_ = std::max(max_len_, u.size());
  }
  // Unigram fallback: tokenization must never get stuck.
  for (char c : base.symbols())
    CTCB_CHECK(covered.count(c) > 0, "base symbol '", c,
               "' lacks a unigram subword unit");
}

SubwordVocab SubwordVocab::from_texts(const BaseVocab& base,
                                      std::span<const std::string> texts) {
  std::vector<std::string> units;
  for (char c : base.symbols()) units.emplace_back(1, c);
  std::set<std::string> bigrams;
  for (const auto& text : texts)
    for (std::size_t i = 0; i + 1 < text.size(); ++i)
      bigrams.insert(text.substr(i, 2));
  units.insert(units.end(), bigrams.begin(), bigrams.end());
  return SubwordVocab(base, std::move(units));
}

const std::string& SubwordVocab::unit(int id) const {
  CTCB_CHECK(id >= 0 && static_cast<std::size_t>(id) < units_.size(),
             "subword id ", id, " out of range");
  return units_[static_cast<std::size_t>(id)];
}

TokenSeq SubwordVocab::tokenize(const std::string& text) const {
  TokenSeq seq;
  seq.tag = VocabTag::kSubword;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int match = -1;
    std::size_t take = std::min(max_len_, text.size() - pos);
    for (std::size_t len = take; len >= 1; --len) {
      auto it = index_.find(text.substr(pos, len));
      if (it != index_.end()) {
        match = it->second;
        take = len;
        break;
      }
    }
    if (match < 0) {
      throw TokenizeError(
          format_msg("no subword unit matches '", text[pos], "' at position ",
                     pos),
          text[pos], pos);
    }
    seq.ids.push_back(match);
    pos += take;
  }
  return seq;
}

std::string SubwordVocab::detokenize(const TokenSeq& seq) const {
  CTCB_CHECK(seq.tag == VocabTag::kSubword,
             "detokenize: wrong vocabulary tag");
  std::string out;
  for (int id : seq.ids) out += unit(id);
  return out;
}

TokenSeq collapse(const std::vector<int>& path, int blank_id) {
  TokenSeq out;
  out.tag = VocabTag::kBase;
  int prev = blank_id;
  for (std::size_t i = 0; i < path.size(); ++i) {
    int a = path[i];
    if (a != prev && a != blank_id) out.ids.push_back(a);
    prev = a;
  }
  return out;
}

namespace {

// DFS over raw label sequences, pruned only on "collapsed prefix must be a
// prefix of the target" and on remaining-length arithmetic. Deliberately
// ignorant of the CTC forward recursion so it can serve as its oracle.
void enumerate_rec(const std::vector<int>& target, std::size_t length,
                   int blank_id, std::vector<int>& path,
                   std::size_t matched, std::vector<std::vector<int>>& out) {
  if (path.size() == length) {
    if (matched == target.size()) out.push_back(path);
    return;
  }
  if (target.size() - matched > length - path.size()) return;
  int prev = path.empty() ? blank_id : path.back();
  for (int a = 0; a <= blank_id; ++a) {
    std::size_t next_matched = matched;
    if (a != blank_id && a != prev) {
      // This frame emits a fresh token; it must be the next target token.
      if (matched >= target.size() || target[matched] != a) continue;
      next_matched = matched + 1;
    }
    path.push_back(a);
    enumerate_rec(target, length, blank_id, path, next_matched, out);
    path.pop_back();
  }
}

}  // namespace

std::vector<std::vector<int>> enumerate_inverse_collapse(
    const std::vector<int>& target, std::size_t length, int vocab_size) {
  CTCB_CHECK(length <= 14 && vocab_size <= 4,
             "enumerate_inverse_collapse outside oracle scope (length ",
             length, ", vocab ", vocab_size, ")");
  for (int t : target)
    CTCB_CHECK(t >= 0 && t < vocab_size, "target token ", t,
               " outside vocabulary of size ", vocab_size);
  std::vector<std::vector<int>> out;
  std::vector<int> path;
  enumerate_rec(target, length, vocab_size, path, 0, out);
  return out;
}

}  // namespace ctcbridge::vocab

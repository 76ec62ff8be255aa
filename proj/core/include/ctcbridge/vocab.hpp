// ctcbridge/vocab.hpp
//
// The two target-side vocabularies: a base-symbol vocabulary (phoneme
// analogue, per-character tokenization) and a subword vocabulary built from
// unigrams plus attested bigrams with greedy longest-match segmentation.
// Also the CTC collapsing function and its brute-force inverse, used as the
// enumeration oracle by the CTC tests.

#ifndef CTCBRIDGE_VOCAB_HPP_
#define CTCBRIDGE_VOCAB_HPP_

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctcbridge/error.hpp"

namespace ctcbridge::vocab {

enum class VocabTag { kSubword, kBase };

struct TokenSeq {
  std::vector<int> ids;
  VocabTag tag = VocabTag::kBase;

  bool operator==(const TokenSeq&) const = default;
};

class BaseVocab {
 public:
  explicit BaseVocab(std::vector<char> symbols);
  static BaseVocab make_default(std::size_t size = 12);

  std::size_t size() const { return symbols_.size(); }
  // The reserved CTC blank index, one past the last symbol.
  int blank_id() const { return static_cast<int>(symbols_.size()); }
  char symbol(int id) const;
  int id_of(char symbol) const;  // -1 when unknown

  TokenSeq tokenize(const std::string& text) const;
  std::string detokenize(const TokenSeq& seq) const;

  const std::vector<char>& symbols() const { return symbols_; }

 private:
  std::vector<char> symbols_;
  std::unordered_map<char, int> index_;
};

class SubwordVocab {
 public:
  SubwordVocab(const BaseVocab& base, std::vector<std::string> units);
  // Unigrams of every base symbol plus every bigram attested in `texts`.
  static SubwordVocab from_texts(const BaseVocab& base,
                                 std::span<const std::string> texts);

  std::size_t size() const { return units_.size(); }
  const std::string& unit(int id) const;
  const std::vector<std::string>& units() const { return units_; }
  std::size_t max_unit_length() const { return max_len_; }

  // Greedy longest-match, left to right.
  TokenSeq tokenize(const std::string& text) const;
  std::string detokenize(const TokenSeq& seq) const;

 private:
  std::vector<std::string> units_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_len_ = 1;
};

// Merges consecutive repeats, then deletes blanks.
TokenSeq collapse(const std::vector<int>& path, int blank_id);

// All sequences over {0..vocab_size-1, blank} of the given length whose
// collapse equals `target`. Exponential; capped at length <= 14 and
// vocab_size <= 4 (oracle scope only).
std::vector<std::vector<int>> enumerate_inverse_collapse(
    const std::vector<int>& target, std::size_t length, int vocab_size);

}  // namespace ctcbridge::vocab

#endif  // CTCBRIDGE_VOCAB_HPP_

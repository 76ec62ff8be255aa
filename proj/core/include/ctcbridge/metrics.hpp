// ctcbridge/metrics.hpp
//
// Sequence scoring: corpus-level token accuracy (edit-distance based) and
// a 4-gram overlap score with brevity penalty.

#ifndef CTCBRIDGE_METRICS_HPP_
#define CTCBRIDGE_METRICS_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace ctcbridge::metrics {

std::size_t edit_distance(std::span<const int> a, std::span<const int> b);

// Accumulates hypothesis/reference pairs; corpus-level scores.
class SequenceScorer {
 public:
  void add(std::span<const int> hyp, std::span<const int> ref);

  // 1 - total_edits / total_ref_tokens, clamped to [0, 1].
  double token_accuracy() const;
  // Geometric mean of modified 1..4-gram precisions (add-one smoothing
  // above unigrams) times the brevity penalty.
  double ngram_score() const;
  std::size_t pairs() const { return pairs_; }

 private:
  std::size_t pairs_ = 0;
  std::size_t total_edits_ = 0;
  std::size_t total_ref_tokens_ = 0;
  std::size_t hyp_len_ = 0, ref_len_ = 0;
  std::array<std::size_t, 4> matches_{};
  std::array<std::size_t, 4> totals_{};
};

}  // namespace ctcbridge::metrics

#endif  // CTCBRIDGE_METRICS_HPP_

// core/src/metrics.cpp

#include "ctcbridge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ctcbridge::metrics {

std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void SequenceScorer::add(std::span<const int> hyp, std::span<const int> ref) {
  ++pairs_;
  total_edits_ += edit_distance(hyp, ref);
  total_ref_tokens_ += ref.size();
  hyp_len_ += hyp.size();
  ref_len_ += ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) continue;
    std::map<std::vector<int>, std::size_t> ref_counts;
    if (ref.size() >= n)
      for (std::size_t i = 0; i + n <= ref.size(); ++i)
        ++ref_counts[std::vector<int>(ref.begin() + i, ref.begin() + i + n)];
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      ++totals_[n - 1];
      std::vector<int> gram(hyp.begin() + i, hyp.begin() + i + n);
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end() && it->second > 0) {
        --it->second;
        ++matches_[n - 1];
      }
    }
  }
}

double SequenceScorer::token_accuracy() const {
  if (total_ref_tokens_ == 0) return 1.0;
  double acc = 1.0 - static_cast<double>(total_edits_) /
                         static_cast<double>(total_ref_tokens_);
  return std::clamp(acc, 0.0, 1.0);
}

double SequenceScorer::ngram_score() const {
  if (hyp_len_ == 0 || ref_len_ == 0) return 0.0;
  double log_prec = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double smooth = n == 0 ? 0.0 : 1.0;
    double m = static_cast<double>(matches_[n]) + smooth;
    double t = static_cast<double>(totals_[n]) + smooth;
    if (m <= 0.0 || t <= 0.0) return 0.0;
    log_prec += 0.25 * std::log(m / t);
  }
  double bp = hyp_len_ >= ref_len_
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len_) /
                                       static_cast<double>(hyp_len_));
  return bp * std::exp(log_prec);
}

}  // namespace ctcbridge::metrics

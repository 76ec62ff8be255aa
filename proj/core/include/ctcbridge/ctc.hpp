// ctcbridge/ctc.hpp
//
// CTC loss via the log-space forward algorithm (differentiable through the
// log-probability matrix), a brute-force enumeration oracle, constrained
// Viterbi forced alignment, and greedy best-path decoding.
//
// Conventions: log_probs is [T x (K+1)] with row-wise log-softmax already
// applied; the blank occupies the last column (index K). Targets index the
// K non-blank labels.

#ifndef CTCBRIDGE_CTC_HPP_
#define CTCBRIDGE_CTC_HPP_

#include <utility>
#include <vector>

#include "ctcbridge/tensor.hpp"
#include "ctcbridge/vocab.hpp"

namespace ctcbridge::ctc {

struct AlignmentPath {
  std::vector<int> labels;  // length T over {0..K-1, blank}
  double log_prob = 0.0;    // sum of the chosen per-frame log probabilities
};

// Fewest frames that can align to `target`: one per token plus one
// separating blank per adjacent repeated pair.
std::size_t min_feasible_frames(const std::vector<int>& target);

// -log sum over all alignments collapsing to `target`. Throws
// InfeasibleTarget (naming the minimum frame count) when the target cannot
// fit. Gradients flow into log_probs.
nn::Tensor ctc_loss(const nn::Tensor& log_probs,
                    const std::vector<int>& target);

// Literal log-sum over the enumerated alignment set (oracle scope only).
// Returns +infinity when the set is empty.
double ctc_loss_bruteforce(const nn::Tensor& log_probs,
                           const std::vector<int>& target);

// Most probable alignment constrained to collapse to `target`. Ties prefer
// remaining in the current extended-label state. Collapse of the result
// always equals the target.
AlignmentPath viterbi_forced_align(const nn::Tensor& log_probs,
                                   const std::vector<int>& target);

// Per-frame argmax; returned tokens are the collapse of the path (may be
// empty).
std::pair<vocab::TokenSeq, AlignmentPath> best_path_decode(
    const nn::Tensor& log_probs);

}  // namespace ctcbridge::ctc

#endif  // CTCBRIDGE_CTC_HPP_

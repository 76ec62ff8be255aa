// ctcbridge/align.hpp
//
// Representation-alignment losses between the synthesis encoder's outputs
// under adaptor input and embedding input, plus the alignment/uniformity
// diagnostics of the paired representation space.

#ifndef CTCBRIDGE_ALIGN_HPP_
#define CTCBRIDGE_ALIGN_HPP_

#include <span>
#include <string>

#include "ctcbridge/tensor.hpp"

namespace ctcbridge::align {

struct EncoderPair {
  nn::Tensor ch;  // encoder over adaptor states, [M x d]
  nn::Tensor ce;  // encoder over text embeddings, [M x d]
};

struct AlignConfig {
  nn::Similarity similarity = nn::Similarity::kNegL1;
  double tau = 0.1;
  bool use_mse = true;
  bool use_ctr = true;
  // Cut the gradient on the embedding branch (ablation; default trains
  // both branches).
  bool detach_teacher = false;

  void validate() const;
};

std::string similarity_name(nn::Similarity kind);
nn::Similarity similarity_from_name(const std::string& name);

// Sum over positions of the squared L2 distance.
nn::Tensor mse_loss(const EncoderPair& pair);

// Symmetric InfoNCE with in-utterance negatives; each direction weighted
// one half. Zero for M == 1.
nn::Tensor contrastive_loss(const EncoderPair& pair, const AlignConfig& cfg);

// Unweighted sum of the enabled components (zero tensor when both are off).
nn::Tensor align_loss(const EncoderPair& pair, const AlignConfig& cfg);

// Mean L1 distance over matched position pairs.
double alignment_metric(std::span<const EncoderPair> pairs);
// log of the mean of exp(-L1) over mismatched (i != j) in-utterance cross
// pairs; always <= 0.
double uniformity_metric(std::span<const EncoderPair> pairs);

}  // namespace ctcbridge::align

#endif  // CTCBRIDGE_ALIGN_HPP_

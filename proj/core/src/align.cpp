// core/src/align.cpp

#include "ctcbridge/align.hpp"

#include <cmath>

namespace ctcbridge::align {

void AlignConfig::validate() const {
  CTCB_CHECK(tau > 0.0, "contrastive temperature must be positive, got ",
             tau);
}

std::string similarity_name(nn::Similarity kind) {
  switch (kind) {
    case nn::Similarity::kNegL1:
      return "neg_l1";
    case nn::Similarity::kNegL2Squared:
      return "neg_l2_sq";
    case nn::Similarity::kDot:
      return "dot";
  }
  return "unknown";
}

nn::Similarity similarity_from_name(const std::string& name) {
  if (name == "neg_l1") return nn::Similarity::kNegL1;
  if (name == "neg_l2_sq") return nn::Similarity::kNegL2Squared;
  if (name == "dot") return nn::Similarity::kDot;
  throw ConfigError("unknown similarity '" + name +
                    "' (expected neg_l1, neg_l2_sq, or dot)");
}

namespace {

void check_pair(const EncoderPair& pair) {
  CTCB_CHECK(pair.ch.defined() && pair.ce.defined(),
             "encoder pair is incomplete");
  if (pair.ch.shape() != pair.ce.shape()) {
    throw ContractViolation(format_msg(
        "encoder pair shape mismatch: ", nn::shape_str(pair.ch.shape()),
        " vs ", nn::shape_str(pair.ce.shape())));
  }
  CTCB_CHECK(pair.ch.rows() >= 1, "encoder pair must have M >= 1 positions");
}

}  // namespace

nn::Tensor mse_loss(const EncoderPair& pair) {
  check_pair(pair);
  nn::Tensor diff = nn::sub(pair.ch, pair.ce);
  return nn::sum(nn::mul(diff, diff));
}

nn::Tensor contrastive_loss(const EncoderPair& pair, const AlignConfig& cfg) {
  check_pair(pair);
  cfg.validate();
  nn::Tensor ce = cfg.detach_teacher ? pair.ce.detach() : pair.ce;
  nn::Tensor sim = nn::pairwise_similarity(pair.ch, ce, cfg.similarity);
  nn::Tensor logits = nn::scale(sim, 1.0 / cfg.tau);
  // Rows: c^H_i against all c^E_j; columns: c^E_i against all c^H_j.
  nn::Tensor row_term = nn::sum(nn::diagonal(nn::log_softmax_rows(logits)));
  nn::Tensor col_term = nn::sum(
      nn::diagonal(nn::log_softmax_rows(nn::transpose(logits))));
  return nn::scale(nn::add(row_term, col_term), -0.5);
}

nn::Tensor align_loss(const EncoderPair& pair, const AlignConfig& cfg) {
  check_pair(pair);
  if (!cfg.use_mse && !cfg.use_ctr) return nn::Tensor::zeros({1});
  nn::Tensor total;
  if (cfg.use_mse) total = mse_loss(pair);
  if (cfg.use_ctr) {
    nn::Tensor ctr = contrastive_loss(pair, cfg);
    total = total.defined() ? nn::add(total, ctr) : ctr;
  }
  return total;
}

namespace {

double row_l1(const nn::Tensor& a, std::size_t i, const nn::Tensor& b,
              std::size_t j) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k)
    acc += std::abs(a.at(i, k) - b.at(j, k));
  return acc;
}

}  // namespace

double alignment_metric(std::span<const EncoderPair> pairs) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& pair : pairs) {
    check_pair(pair);
    for (std::size_t i = 0; i < pair.ch.rows(); ++i) {
      total += row_l1(pair.ch, i, pair.ce, i);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double uniformity_metric(std::span<const EncoderPair> pairs) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& pair : pairs) {
    check_pair(pair);
    std::size_t m = pair.ch.rows();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        total += std::exp(-row_l1(pair.ch, i, pair.ce, j));
        ++count;
      }
  }
  return count == 0 ? 0.0 : std::log(total / static_cast<double>(count));
}

}  // namespace ctcbridge::align

// core/src/ctc.cpp

#include "ctcbridge/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ctcbridge::ctc {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

struct Problem {
  std::size_t frames;       // T
  std::size_t num_classes;  // K+1
  int blank;                // K
  std::vector<int> ext;     // blank-interleaved labels, length 2M+1
};

Problem make_problem(const nn::Tensor& log_probs,
                     const std::vector<int>& target) {
  CTCB_CHECK(log_probs.shape().size() == 2 && log_probs.cols() >= 2,
             "ctc: log_probs must be [T x (K+1)] with K >= 1, got ",
             nn::shape_str(log_probs.shape()));
  Problem p;
  p.frames = log_probs.rows();
  p.num_classes = log_probs.cols();
  p.blank = static_cast<int>(p.num_classes) - 1;
  for (int t : target)
    CTCB_CHECK(t >= 0 && t < p.blank, "ctc: target token ", t,
               " outside [0, ", p.blank, ")");
  p.ext.reserve(2 * target.size() + 1);
  p.ext.push_back(p.blank);
  for (int t : target) {
    p.ext.push_back(t);
    p.ext.push_back(p.blank);
  }
  return p;
}

// True when state s may be entered from s-2 (label change, skipping the
// intervening blank).
bool skip_allowed(const std::vector<int>& ext, std::size_t s, int blank) {
  return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
}

std::vector<double> forward_alphas(const Problem& p, const double* lp) {
  std::size_t s_count = p.ext.size();
  std::vector<double> alpha(p.frames * s_count, kLogZero);
  auto at = [&](std::size_t t, std::size_t s) -> double& {
    return alpha[t * s_count + s];
  };
  at(0, 0) = lp[static_cast<std::size_t>(p.ext[0])];
  if (s_count > 1) at(0, 1) = lp[static_cast<std::size_t>(p.ext[1])];
  for (std::size_t t = 1; t < p.frames; ++t) {
    const double* row = lp + t * p.num_classes;
    for (std::size_t s = 0; s < s_count; ++s) {
      double acc = at(t - 1, s);
      if (s >= 1) acc = log_sum_exp(acc, at(t - 1, s - 1));
      if (skip_allowed(p.ext, s, p.blank))
        acc = log_sum_exp(acc, at(t - 1, s - 2));
      at(t, s) = acc == kLogZero
                     ? kLogZero
                     : acc + row[static_cast<std::size_t>(p.ext[s])];
    }
  }
  return alpha;
}

}  // namespace

std::size_t min_feasible_frames(const std::vector<int>& target) {
  std::size_t n = target.size();
  for (std::size_t i = 0; i + 1 < target.size(); ++i)
    if (target[i] == target[i + 1]) ++n;
  return n;
}

nn::Tensor ctc_loss(const nn::Tensor& log_probs,
                    const std::vector<int>& target) {
  Problem p = make_problem(log_probs, target);
  std::size_t min_frames = min_feasible_frames(target);
  if (p.frames < min_frames) {
    throw InfeasibleTarget(format_msg(
        "ctc: target of length ", target.size(), " needs at least ",
        min_frames, " frames, got ", p.frames));
  }
  const double* lp = log_probs.value().data();
  std::size_t s_count = p.ext.size();
  std::vector<double> alpha = forward_alphas(p, lp);

  double log_p = alpha[(p.frames - 1) * s_count + (s_count - 1)];
  if (s_count > 1) {
    log_p = log_sum_exp(log_p,
                        alpha[(p.frames - 1) * s_count + (s_count - 2)]);
  }
  double loss = -log_p;

  auto impl = std::make_shared<nn::TensorImpl>();
  impl->shape = {1};
  impl->value = {loss};
  impl->parents = {log_probs.impl()};
  impl->requires_grad = log_probs.requires_grad();
  if (impl->requires_grad) {
    impl->backward_fn = [p, alpha = std::move(alpha), loss](
                            nn::TensorImpl& self) {
      auto& parent = self.parents[0];
      parent->ensure_grad();
      const double* lp = parent->value.data();
      std::size_t s_count = p.ext.size();
      // Backward variables: beta[t][s] = log-prob of completing from state
      // s after emitting at time t (emission at t excluded).
      std::vector<double> beta(p.frames * s_count, kLogZero);
      auto bat = [&](std::size_t t, std::size_t s) -> double& {
        return beta[t * s_count + s];
      };
      bat(p.frames - 1, s_count - 1) = 0.0;
      if (s_count > 1) bat(p.frames - 1, s_count - 2) = 0.0;
      for (std::size_t t = p.frames - 1; t-- > 0;) {
        const double* next_row = lp + (t + 1) * p.num_classes;
        for (std::size_t s = 0; s < s_count; ++s) {
          double acc =
              bat(t + 1, s) + next_row[static_cast<std::size_t>(p.ext[s])];
          if (s + 1 < s_count) {
            acc = log_sum_exp(
                acc, bat(t + 1, s + 1) +
                         next_row[static_cast<std::size_t>(p.ext[s + 1])]);
          }
          if (s + 2 < s_count && skip_allowed(p.ext, s + 2, p.blank)) {
            acc = log_sum_exp(
                acc, bat(t + 1, s + 2) +
                         next_row[static_cast<std::size_t>(p.ext[s + 2])]);
          }
          bat(t, s) = acc;
        }
      }
      // d(-log P)/d lp(t,k) = -exp(LSE_{s: ext[s]=k}(alpha+beta) - log P),
      // and log P = -loss.
      double g = self.grad[0];
      for (std::size_t t = 0; t < p.frames; ++t) {
        std::vector<double> lse(p.num_classes, kLogZero);
        for (std::size_t s = 0; s < s_count; ++s) {
          double ab = alpha[t * s_count + s] + beta[t * s_count + s];
          auto k = static_cast<std::size_t>(p.ext[s]);
          lse[k] = log_sum_exp(lse[k], ab);
        }
        for (std::size_t k = 0; k < p.num_classes; ++k) {
          if (lse[k] == kLogZero) continue;
          parent->grad[t * p.num_classes + k] -=
              g * std::exp(lse[k] + loss);
        }
      }
    };
  }
  return nn::Tensor(impl);
}

double ctc_loss_bruteforce(const nn::Tensor& log_probs,
                           const std::vector<int>& target) {
  Problem p = make_problem(log_probs, target);
  auto paths = vocab::enumerate_inverse_collapse(target, p.frames, p.blank);
  const double* lp = log_probs.value().data();
  double total = kLogZero;
  for (const auto& path : paths) {
    double s = 0.0;
    for (std::size_t t = 0; t < path.size(); ++t)
      s += lp[t * p.num_classes + static_cast<std::size_t>(path[t])];
    total = log_sum_exp(total, s);
  }
  return -total;  // +inf when no alignment exists
}

AlignmentPath viterbi_forced_align(const nn::Tensor& log_probs,
                                   const std::vector<int>& target) {
  Problem p = make_problem(log_probs, target);
  std::size_t min_frames = min_feasible_frames(target);
  if (p.frames < min_frames) {
    throw InfeasibleTarget(format_msg(
        "forced alignment: target of length ", target.size(),
        " needs at least ", min_frames, " frames, got ", p.frames));
  }
  const double* lp = log_probs.value().data();
  std::size_t s_count = p.ext.size();
  std::vector<double> delta(p.frames * s_count, kLogZero);
  std::vector<int> back(p.frames * s_count, -1);
  delta[0] = lp[static_cast<std::size_t>(p.ext[0])];
  if (s_count > 1) delta[1] = lp[static_cast<std::size_t>(p.ext[1])];
  for (std::size_t t = 1; t < p.frames; ++t) {
    const double* row = lp + t * p.num_classes;
    for (std::size_t s = 0; s < s_count; ++s) {
      // Candidates in preference order: stay, advance one, skip a blank.
      double best = delta[(t - 1) * s_count + s];
      int from = static_cast<int>(s);
      if (s >= 1 && delta[(t - 1) * s_count + s - 1] > best) {
        best = delta[(t - 1) * s_count + s - 1];
        from = static_cast<int>(s) - 1;
      }
      if (skip_allowed(p.ext, s, p.blank) &&
          delta[(t - 1) * s_count + s - 2] > best) {
        best = delta[(t - 1) * s_count + s - 2];
        from = static_cast<int>(s) - 2;
      }
      if (best == kLogZero) {
        delta[t * s_count + s] = kLogZero;
      } else {
        delta[t * s_count + s] =
            best + row[static_cast<std::size_t>(p.ext[s])];
        back[t * s_count + s] = from;
      }
    }
  }
  std::size_t end = s_count - 1;
  if (s_count > 1) {
    // On ties prefer the lower extended-label state.
    double last = delta[(p.frames - 1) * s_count + s_count - 1];
    double prev = delta[(p.frames - 1) * s_count + s_count - 2];
    if (prev >= last) end = s_count - 2;
  }
  CTCB_CHECK(delta[(p.frames - 1) * s_count + end] != kLogZero,
             "forced alignment: no feasible path");

  AlignmentPath result;
  result.labels.resize(p.frames);
  result.log_prob = delta[(p.frames - 1) * s_count + end];
  std::size_t s = end;
  for (std::size_t t = p.frames; t-- > 0;) {
    result.labels[t] = p.ext[s];
    if (t > 0) s = static_cast<std::size_t>(back[t * s_count + s]);
  }
  return result;
}

std::pair<vocab::TokenSeq, AlignmentPath> best_path_decode(
    const nn::Tensor& log_probs) {
  CTCB_CHECK(log_probs.shape().size() == 2,
             "best_path_decode: log_probs must be 2-D");
  std::size_t t_count = log_probs.rows(), n = log_probs.cols();
  int blank = static_cast<int>(n) - 1;
  AlignmentPath path;
  path.labels.resize(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (log_probs.at(t, k) > log_probs.at(t, best)) best = k;
    path.labels[t] = static_cast<int>(best);
    path.log_prob += log_probs.at(t, best);
  }
  return {vocab::collapse(path.labels, blank), path};
}

}  // namespace ctcbridge::ctc

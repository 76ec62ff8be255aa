// ctcbridge/checks.hpp
//
// Self-verification suites behind `ctcbridge check`: CTC oracle equality,
// finite-difference gradient checks over every exported loss, and the
// structural invariants. Each suite reports its maximum numeric deviation.

#ifndef CTCBRIDGE_CHECKS_HPP_
#define CTCBRIDGE_CHECKS_HPP_

#include <functional>
#include <string>
#include <vector>

#include "ctcbridge/vocab.hpp"

namespace ctcbridge::checks {

struct SuiteReport {
  std::string name;
  bool passed = false;
  double max_deviation = 0.0;
  std::size_t cases = 0;
  std::vector<std::string> failures;

  std::string summary() const;
};

using CollapseFn =
    std::function<vocab::TokenSeq(const std::vector<int>&, int)>;

// Forward algorithm vs brute-force enumeration, Viterbi vs constrained
// argmax, collapse and bound laws. `collapse_override` exists for mutation
// testing: handing in a broken collapse must make the suite fail.
SuiteReport run_ctc_suite(std::size_t instances = 500,
                          std::uint64_t seed = 12345,
                          const CollapseFn* collapse_override = nullptr);

// Central finite differences against reverse-mode gradients for the CTC,
// translation, synthesis, MSE, contrastive (three similarities), and both
// composite objectives.
SuiteReport run_grad_suite(std::size_t instances_per_loss = 20,
                           std::uint64_t seed = 777);

// Merge-weight normalization, training-mode length law, softmax
// normalization, determinism, checkpoint round trip.
SuiteReport run_invariant_suite(std::uint64_t seed = 999);

std::vector<SuiteReport> run_suites(const std::string& which);

}  // namespace ctcbridge::checks

#endif  // CTCBRIDGE_CHECKS_HPP_

// ctcbridge/cli.hpp
//
// Command-line entry point: corpus generation, training in three modes,
// evaluation, the alignment-objective ablation grid, and the verification
// suites. Exit codes: 0 success, 1 runtime invariant breach, 2 config or
// schema error.

#ifndef CTCBRIDGE_CLI_HPP_
#define CTCBRIDGE_CLI_HPP_

#include <string>
#include <vector>

namespace ctcbridge::cli {

int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

// Worker-thread cap from CTCBRIDGE_THREADS (clamped to hardware).
unsigned worker_threads();

}  // namespace ctcbridge::cli

#endif  // CTCBRIDGE_CLI_HPP_

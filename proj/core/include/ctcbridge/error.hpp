// ctcbridge/error.hpp
//
// Exception types shared by all components. The CLI maps ConfigError to
// exit code 2 and everything else to exit code 1.

#ifndef CTCBRIDGE_ERROR_HPP_
#define CTCBRIDGE_ERROR_HPP_

#include <sstream>
#include <stdexcept>
#include <string>

namespace ctcbridge {

// Precondition or shape-contract violation. Indicates a programming error
// in the caller, not bad data.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// A CTC target that cannot be aligned within the given frame budget.
class InfeasibleTarget : public std::runtime_error {
 public:
  explicit InfeasibleTarget(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Bad experiment config or schema mismatch.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A runtime invariant was broken (e.g. the zero-shot trainer touched the
// parallel speech split).
class InvariantBreach : public std::runtime_error {
 public:
  explicit InvariantBreach(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Tokenization failure, carries symbol and position.
class TokenizeError : public std::runtime_error {
 public:
  TokenizeError(const std::string& msg, char symbol, std::size_t position)
      : std::runtime_error(msg), symbol(symbol), position(position) {}
  char symbol;
  std::size_t position;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string format_msg(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

}  // namespace ctcbridge

#define CTCB_CHECK(cond, ...)                                              \
  do {                                                                     \
    if (!(cond)) {                                                         \
      throw ::ctcbridge::ContractViolation(                                \
          ::ctcbridge::format_msg("check failed: " #cond " ",              \
                                  ##__VA_ARGS__));                         \
    }                                                                      \
  } while (0)

#endif  // CTCBRIDGE_ERROR_HPP_

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rydtx {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Switch contrast requested against a zero no-gate reference.
class UndefinedContrastError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Measured means that cannot come from any physical storage process.
class InconsistentMeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<std::string> diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}

  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration failing validation; carries every violated invariant.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : std::invalid_argument(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

namespace detail {

inline void require_non_negative(double x, const char* name) {
  if (!(x >= 0.0)) throw DomainError(std::string(name) + " must be non-negative");
}

inline void throw_if_violated(const std::vector<std::string>& violations) {
  if (!violations.empty()) throw ValidationError(violations);
}

}  // namespace detail
}  // namespace rydtx

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kmedecon {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Points are stored row-wise: an n x d matrix holds n points of dimension d.
using Points = Eigen::MatrixXd;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Raised when a linear system cannot be factorized even after the jitter
// escalation sequence has been exhausted. Carries the jitters that were tried.
struct SingularSystemError : std::runtime_error {
  std::vector<double> jitter_trace;

  explicit SingularSystemError(const std::string& what,
                               std::vector<double> trace = {})
      : std::runtime_error(what), jitter_trace(std::move(trace)) {}
};

struct OptimizationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_finite(const Eigen::Ref<const Matrix>& m,
                           const char* name) {
  if (!m.allFinite()) {
    throw DimensionError(std::string(name) + ": non-finite entry");
  }
}

}  // namespace kmedecon

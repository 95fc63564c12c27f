#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nce_lab {

/// Argument outside the domain of a function (non-positive Gamma argument,
/// unsupported moment order, epsilon out of range, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mismatched dimensions, counts or an asymmetric matrix.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Quadrature that did not reach its tolerance; carries the best estimate.
class AccuracyError : public std::runtime_error {
 public:
  AccuracyError(const std::string& what, double best_estimate, double abs_error)
      : std::runtime_error(what), best_estimate_(best_estimate), abs_error_(abs_error) {}

  double best_estimate() const noexcept { return best_estimate_; }
  double abs_error() const noexcept { return abs_error_; }

 private:
  double best_estimate_;
  double abs_error_;
};

/// Optimizer produced a non-finite loss; the loss trace up to that point is kept.
class OptimizationError : public std::runtime_error {
 public:
  OptimizationError(const std::string& what, std::vector<double> trace,
                    std::vector<double> last_theta = {})
      : std::runtime_error(what), trace_(std::move(trace)), last_theta_(std::move(last_theta)) {}

  const std::vector<double>& trace() const noexcept { return trace_; }
  /// Last finite iterate, when one exists.
  const std::vector<double>& last_theta() const noexcept { return last_theta_; }

 private:
  std::vector<double> trace_;
  std::vector<double> last_theta_;
};

/// Invalid experiment or CLI configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unusable input data (e.g. a CSV handed to the plotter).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nce_lab

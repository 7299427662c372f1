#pragma once

#include <stdexcept>
#include <string>

namespace ebridge {

// Numerical failures (singular Gramians, non-convergence, bad support) map to
// exit code 1 in the CLI; configuration problems map to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotControllable : public NumericalError {
 public:
  explicit NotControllable(const std::string& what)
      : NumericalError("ensemble not averaged-controllable " + what) {}
};

class NotSpd : public NumericalError {
 public:
  NotSpd() : NumericalError("covariance not SPD") {}
};

class NoConvergence : public NumericalError {
 public:
  NoConvergence(double residual, std::size_t iterations)
      : NumericalError("no convergence: residual " + std::to_string(residual) +
                       " after " + std::to_string(iterations) + " iterations"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class SupportError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ebridge

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace dqagt {

// Bad input: malformed config, invalid graph, constants outside the domain
// of the tuning formulas. The CLI maps these to exit code 2.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A run or check that was set up correctly but failed. Exit code 1.
class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class InvalidSizeError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class NotDoublyStochasticError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class ConnectivityError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class DegenerateSpectrumError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class ParameterError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class InvalidValueError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class DomainError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class UntunableError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class InfeasibleEpsilonError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};
class ConfigError : public ConfigurationError {
  using ConfigurationError::ConfigurationError;
};

// Encoder and decoder disagree about the code alphabet or step.
class ProtocolError : public RunFailure {
  using RunFailure::RunFailure;
};

class SaturationError : public RunFailure {
 public:
  SaturationError(std::int64_t round, const std::string& what)
      : RunFailure(what), round_(round) {}
  std::int64_t round() const { return round_; }

 private:
  std::int64_t round_;
};

class DivergenceError : public RunFailure {
 public:
  DivergenceError(std::int64_t round, const std::string& what)
      : RunFailure(what), round_(round) {}
  std::int64_t round() const { return round_; }

 private:
  std::int64_t round_;
};

class NoConvergenceError : public RunFailure {
 public:
  NoConvergenceError(Eigen::VectorXd last_iterate, double grad_norm,
                     const std::string& what)
      : RunFailure(what),
        last_iterate_(std::move(last_iterate)),
        grad_norm_(grad_norm) {}
  const Eigen::VectorXd& last_iterate() const { return last_iterate_; }
  double grad_norm() const { return grad_norm_; }

 private:
  Eigen::VectorXd last_iterate_;
  double grad_norm_;
};

}  // namespace dqagt

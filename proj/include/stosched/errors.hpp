#pragma once

#include <stdexcept>
#include <string>

namespace stosched {

/// Malformed input: bad dimensions, out-of-range parameters, unparseable config.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// The scheduling problem has no feasible distribution.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical routine failed to produce a usable answer.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Distributed protocol violation (consensus failure, split bisection decisions).
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace stosched

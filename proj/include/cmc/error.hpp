#pragma once

#include <stdexcept>
#include <string>

namespace cmc {

/// Raised when a computation cannot produce a finite, well-defined result
/// (degenerate weights, non-finite integrands, failed factorizations).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for malformed experiment configuration or input files.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cmc

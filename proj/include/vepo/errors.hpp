#pragma once

#include <stdexcept>
#include <string>

namespace vepo {

/// Invalid configuration or malformed input (dimension mismatches,
/// out-of-range parameters, unparsable files). CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure at runtime (diverging fit, reducible chain, infeasible
/// constraint, insufficient data coverage). CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vepo

#pragma once

#include <stdexcept>
#include <string>

namespace horus {

// Bad numeric input to a pure function (non-finite entries, empty sets, out-of-range probabilities).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

// Shapes or run parameters that cannot be honoured (client wider than the declared global maximum,
// Krum without enough neighbours, unknown config keys).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// An internal invariant failed at runtime. The CLI maps this to exit status 3.
class InvariantViolation : public std::logic_error {
 public:
  explicit InvariantViolation(const std::string& what) : std::logic_error(what) {}
};

}  // namespace horus

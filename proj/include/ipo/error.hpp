#pragma once

#include <stdexcept>
#include <string>

namespace ipo {

// Tensor shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (log of a
// non-positive value, mean of an empty tensor).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid user-supplied configuration or scenario.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: stepping a finished episode, non-scalar loss, empty batch.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A computation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ipo

#pragma once

#include <stdexcept>
#include <string>

namespace spin {

// Bad user input: malformed files, inconsistent configs, out-of-range arguments.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shape disagreement between operands.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A reduction over an empty set (softmax over nothing, MAE with no targets).
class EmptySetError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN/Inf produced by a forward op or a diverging loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Misuse of a recorded computation (double backward, foreign Value, ...).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace spin

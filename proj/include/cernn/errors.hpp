#pragma once

#include <stdexcept>
#include <string>

namespace cernn {

// Malformed or out-of-contract input (shapes, ranges, non-finite values, bad files).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A matrix that must be positive definite is not.
class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameters that leave the estimator undefined (no data and no prior).
class Underdetermined : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Supervised folds that lose a class from a training split.
class StratificationError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

}  // namespace cernn

#pragma once

#include <stdexcept>
#include <string>

namespace calibrax {

// Invalid argument or precondition violation (bad probability, shape mismatch, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numeric routine failed: singular system, nonconvergent quadrature.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Optimization diverged (loss became non-finite).
class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

// A stateful object was driven out of order (e.g. update without predict).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input files: bad rows, missing or non-numeric columns.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace calibrax

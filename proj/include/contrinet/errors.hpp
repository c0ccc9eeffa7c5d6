#pragma once

#include <stdexcept>

#include "contrinet/config.hpp"

namespace contrinet {

/// Missing, unreadable or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or corrupted parameter / checkpoint file.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values during training (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace contrinet

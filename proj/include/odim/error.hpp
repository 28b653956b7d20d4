#pragma once

#include <stdexcept>
#include <string>

namespace odim {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid argument value (empty input, u <= 1, ...).
struct ArgumentError : Error {
  using Error::Error;
};

// Problems with user-supplied data (CSV parse failures, bad labels, too-small datasets).
struct DataError : Error {
  using Error::Error;
};

// Metric undefined for the given input (e.g. single-class labels).
struct MetricError : Error {
  using Error::Error;
};

}  // namespace odim

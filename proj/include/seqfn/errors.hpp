#pragma once

#include <stdexcept>
#include <string>

namespace seqfn {

// Every library error derives from Error so callers can map families to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or rank disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Misuse of the gradient machinery (non-scalar loss, empty tape).
struct GraphError : Error {
  using Error::Error;
};

// Malformed input data. Carries the 1-based line (0 when not line-oriented).
struct FormatError : Error {
  FormatError(const std::string& what, std::size_t line_no = 0)
      : Error(line_no ? "line " + std::to_string(line_no) + ": " + what : what), line(line_no) {}
  std::size_t line;
};

// NaN/Inf in a training step.
struct NumericError : Error {
  using Error::Error;
};

// Bad or corrupt checkpoint container.
struct CheckpointError : Error {
  using Error::Error;
};

// Metric requested on input where it is not defined (constant vector, n < 2).
struct UndefinedMetricError : Error {
  using Error::Error;
};

// Incompatible configuration or model specs.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace seqfn

#pragma once

#include <stdexcept>
#include <string>

namespace lowreg {

/// File or stream failure (missing input, unwritable output, bad format).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Optimization produced a non-finite loss and was aborted.
struct NumericalAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace lowreg

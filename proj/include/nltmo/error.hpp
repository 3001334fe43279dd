#pragma once

#include <stdexcept>
#include <string>

namespace nltmo {

// Base of every exception thrown by the library. The CLI maps the concrete
// subclasses onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable file or malformed / truncated image stream.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Inputs whose shapes do not agree (dimension mismatch, bad layer wiring).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Mathematically degenerate input, e.g. a constant image passed to calibration.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Checkpoint file that fails validation.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// A numeric failure during optimization (NaN / Inf loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace nltmo

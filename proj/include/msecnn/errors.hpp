#pragma once

#include <stdexcept>

namespace msecnn {

// User or data problems; the CLI maps these to exit code 1.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A tensor arrived with dimensions the operation cannot accept.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed on-disk data: WAV headers, annotation tables, caches, checkpoints.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Broken internal invariant; the CLI maps these to exit code 2.
struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace msecnn

#pragma once

#include <stdexcept>
#include <string>

namespace mantra {

/// Tensor shapes that do not conform for an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN or infinity observed at an op boundary, or a non-finite training loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, CLI usage, or malformed input file.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Checkpoint with a bad magic, unknown version, or truncated payload.
class CheckpointError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace mantra

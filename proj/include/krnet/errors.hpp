#pragma once

#include <stdexcept>
#include <string>

namespace krnet {

/// Invalid configuration, shapes or arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Overflow or NaN encountered while evaluating a model or loss.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int layer = -1)
      : std::runtime_error(layer >= 0 ? what + " (layer " + std::to_string(layer) + ")" : what),
        layer_(layer) {}

  /// Index of the flow layer that produced the offending value, or -1.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

/// A linear system or triangular factor is singular.
class SingularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace krnet

#pragma once

#include <stdexcept>
#include <string>

namespace masim {

// Invalid configuration (bad WorldConfig, missing run keys, out-of-range args).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Tensor/vector dimension mismatch.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite or otherwise unusable numeric input.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Operation applied to a world/offer/buffer in the wrong state.
struct StateError : std::runtime_error {
  explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

// Metric requested over an empty selection.
struct MetricError : std::runtime_error {
  explicit MetricError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace masim

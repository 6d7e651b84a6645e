#pragma once

#include <stdexcept>
#include <string>

namespace pseudopilot {

// Bad wiring: shapes, layer sizes, config fields that cannot work together.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Violated data contract: bad labels, invalid actions, malformed splits.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, zero norms, rejected optimizer steps.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed files (datasets, checkpoints, configs).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A training run that cannot continue (divergence).
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pseudopilot

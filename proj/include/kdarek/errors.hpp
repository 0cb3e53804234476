#pragma once

#include <stdexcept>
#include <string>

namespace kdarek {

// Validation failures raised by the numerical kernels. All derive from
// std::invalid_argument / std::runtime_error so callers can catch broadly.

struct DuplicateKnots : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EmptyKnots : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TooFewKnots : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TooFewSamples : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Training loss became NaN/inf; carries the epoch where it happened.
struct NonFiniteLoss : std::runtime_error {
  explicit NonFiniteLoss(int epoch_idx)
      : std::runtime_error("non-finite training loss at epoch " +
                           std::to_string(epoch_idx)),
        epoch(epoch_idx) {}
  int epoch;
};

// Covariance matrix not positive definite even after jitter escalation.
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QpInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace kdarek

#pragma once

#include <stdexcept>
#include <string>

namespace sparsecut {

// Shapes of operands do not agree (matmul inner extents, elementwise sizes).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A call violates an operation's precondition (non-square image, causal mask
// on unequal lengths, out-of-range index).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A shortcut set or pattern file breaks a structural invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model wiring is inconsistent (missing fused entry, bad divisibility).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sparsecut

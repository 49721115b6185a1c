#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace coglo {

/// Epoch seconds, UTC. Fractional values appear once travel times are added.
using Seconds = double;

/// Explicit marker for "no path" in travel times, ETAs and matrices.
inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

inline bool is_unreachable(double v) { return std::isinf(v); }

enum class ErrorCode {
  validation,   // malformed input document or violated precondition
  not_found,    // unknown id
  conflict,     // lifecycle violation (already decided, stale)
  expired,      // recommendation outlived its TTL or became infeasible
  size_guard,   // instance exceeds an exact solver's limits
  internal,     // bug guard tripped
};

const char* to_string(ErrorCode code);

/// Error carrying a machine-readable code plus the offending element.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string detail = {})
      : std::runtime_error(message),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace coglo

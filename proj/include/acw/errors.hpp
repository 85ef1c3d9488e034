#pragma once

#include <stdexcept>
#include <string>

namespace acw {

/// Malformed input data: schema violations, bad values, inconsistent rows.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A model fit could not be completed (no events, separation, divergence,
/// infeasible calibration target). Callers that loop over resamples catch
/// this and count a failure instead of crashing.
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace acw

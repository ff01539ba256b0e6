// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace phantomdiff {

/// Numerical failure (NaN/Inf intermediates, diverging optimization, ...).
/// `where` carries the offending step or timestep when known.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg, long where = -1)
      : std::runtime_error(msg), where_(where) {}
  long where() const { return where_; }

 private:
  long where_;
};

/// Variance-schedule construction failed (derived beta left (0,1)).
class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File / serialization failure. Distinct from config validation errors.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration rejected; carries every violation found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, std::vector<std::string> violations)
      : std::runtime_error(msg), violations_(std::move(violations)) {}
  explicit ConfigError(const std::string& msg)
      : std::runtime_error(msg), violations_{msg} {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

}  // namespace phantomdiff

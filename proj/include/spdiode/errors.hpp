#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace spdiode {

// Malformed or invalid configuration. `field` is the dotted key path when known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Precondition violations and unsolvable numeric problems.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Actuation voltage beyond the parallel-plate pull-in threshold.
class PullInError : public NumericError {
 public:
  PullInError(double v_cav, double v_pull_in_eff);
  double v_cav() const noexcept { return v_cav_; }
  // Threshold on the effective junction voltage |V_bi - V_CAV|.
  double v_pull_in() const noexcept { return v_pull_in_; }

 private:
  double v_cav_;
  double v_pull_in_;
};

}  // namespace spdiode

#pragma once

#include <stdexcept>
#include <string>

namespace satfl {

/// Raised when a constraint set admits no strategy. constraint() names the
/// offending constraint ("aoi", "latency", "aoi+latency", "theta_bounds", "budget").
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(std::string constraint, const std::string& what)
      : std::runtime_error(what), constraint_(std::move(constraint)) {}

  const std::string& constraint() const noexcept { return constraint_; }

 private:
  std::string constraint_;
};

/// Configuration or scenario problem. field() names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace satfl

#pragma once

#include <stdexcept>
#include <string>

namespace hoaf {

// Shape or range violation in a call or a config.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite value encountered. `frame` is -1 when the failure is not tied
// to a streaming position.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, long frame = -1)
      : std::runtime_error(frame < 0 ? what
                                     : what + " (frame " + std::to_string(frame) + ")"),
        frame_(frame) {}
  long frame() const { return frame_; }

 private:
  long frame_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejected run configuration; `field()` names the offending key.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::string field, const std::string& why)
      : InvalidArgument("config field '" + field + "': " + why), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace hoaf

#pragma once

#include <stdexcept>
#include <string>

namespace sekd {

/// Thrown when an argument violates a documented precondition.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when training produces a non-finite loss.
class TrainingFailure : public std::runtime_error {
public:
  TrainingFailure(const std::string &what, long step)
      : std::runtime_error(what), step_(step) {}

  long step() const noexcept { return step_; }

private:
  long step_;
};

/// Thrown for missing or malformed files.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace sekd

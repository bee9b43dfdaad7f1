#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twm {

/// Raised when tensor or matrix shapes disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class WavErrorKind { missing_file, bad_container, unsupported_format, truncated, unwritable };

class WavError : public std::runtime_error {
 public:
  WavError(WavErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  WavErrorKind kind() const noexcept { return kind_; }

 private:
  WavErrorKind kind_;
};

/// Non-finite values showed up in a loss, gradient or parameter.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step = -1)
      : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace twm

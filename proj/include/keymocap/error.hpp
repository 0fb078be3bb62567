#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace keymocap {

enum class ErrorKind {
  Parameter,       // dimension mismatch, invalid configuration value
  Numeric,         // non-finite values
  BehindCamera,    // projection of a point with z <= eps in camera frame
  DegenerateCode,  // zero or antipodal latent codes in slerp
  Direction,       // line search called with a non-descent direction
  UnderConstrained,
  Input,           // unreadable or malformed files
  Usage,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorKind::Parameter, what) {}
};

/// Carries the frame index (within the window or sequence) where a
/// non-finite value first appeared, when known.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, std::optional<int> frame = std::nullopt)
      : Error(ErrorKind::Numeric, frame ? what + " (frame " + std::to_string(*frame) + ")" : what),
        frame_(frame) {}
  std::optional<int> frame() const noexcept { return frame_; }

 private:
  std::optional<int> frame_;
};

class BehindCameraError : public Error {
 public:
  explicit BehindCameraError(const std::string& what) : Error(ErrorKind::BehindCamera, what) {}
};

class DegenerateCodeError : public Error {
 public:
  explicit DegenerateCodeError(const std::string& what) : Error(ErrorKind::DegenerateCode, what) {}
};

class DirectionError : public Error {
 public:
  explicit DirectionError(const std::string& what) : Error(ErrorKind::Direction, what) {}
};

class UnderConstrainedError : public Error {
 public:
  explicit UnderConstrainedError(const std::string& what)
      : Error(ErrorKind::UnderConstrained, what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

}  // namespace keymocap

#pragma once

#include <stdexcept>
#include <string>

namespace font {

// Error taxonomy. Every throwing path in the library uses one of these so the
// CLI and tests can distinguish failure classes.
class FontError : public std::runtime_error {
 public:
  explicit FontError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public FontError {
 public:
  explicit ShapeError(const std::string& msg) : FontError("shape error: " + msg) {}
};

class EmptyInputError : public FontError {
 public:
  explicit EmptyInputError(const std::string& msg) : FontError("empty input: " + msg) {}
};

class DecodeError : public FontError {
 public:
  explicit DecodeError(const std::string& msg) : FontError("decode error: " + msg) {}
};

class LengthError : public FontError {
 public:
  explicit LengthError(const std::string& msg) : FontError("length error: " + msg) {}
};

class SingularityError : public FontError {
 public:
  explicit SingularityError(const std::string& msg) : FontError("singular jacobian: " + msg) {}
};

class ConfigError : public FontError {
 public:
  explicit ConfigError(const std::string& msg) : FontError("config error: " + msg) {}
};

class DependencyError : public FontError {
 public:
  explicit DependencyError(const std::string& msg) : FontError("dependency error: " + msg) {}
};

class IntegrityError : public FontError {
 public:
  explicit IntegrityError(const std::string& msg) : FontError("integrity error: " + msg) {}
};

class DivergenceError : public FontError {
 public:
  explicit DivergenceError(const std::string& msg) : FontError("divergence: " + msg) {}
};

class InsufficientDataError : public FontError {
 public:
  explicit InsufficientDataError(const std::string& msg) : FontError("insufficient data: " + msg) {}
};

class RangeError : public FontError {
 public:
  explicit RangeError(const std::string& msg) : FontError("range error: " + msg) {}
};

class StageMismatchError : public FontError {
 public:
  explicit StageMismatchError(const std::string& msg) : FontError("stage type error: " + msg) {}
};

class EstimatorError : public FontError {
 public:
  EstimatorError(const std::string& msg, int frame_index)
      : FontError("estimator error at frame " + std::to_string(frame_index) + ": " + msg),
        frame_index(frame_index) {}
  int frame_index;
};

}  // namespace font

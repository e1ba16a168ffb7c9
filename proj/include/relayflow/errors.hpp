#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relayflow {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, const std::string& message)
      : Error("syntax error at position " + std::to_string(position) + ": " + message),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class UnknownVariable : public Error {
 public:
  UnknownVariable(std::size_t position, int index, int dimension)
      : Error("unknown variable x" + std::to_string(index) + " at position " +
              std::to_string(position) + " (dimension " + std::to_string(dimension) + ")"),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

class BoundaryNotFound : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  using Error::Error;
};

class OutOfSpan : public Error {
 public:
  using Error::Error;
};

/// A located crossing is (numerically) tangent to its switching surface.
class DegenerateCrossing : public Error {
 public:
  DegenerateCrossing(const std::string& message, int stage = -1)
      : Error(stage >= 0 ? "stage " + std::to_string(stage) + ": " + message : message),
        stage_(stage) {}
  int stage() const noexcept { return stage_; }

 private:
  int stage_;
};

class NoCrossingWithinHorizon : public Error {
 public:
  using Error::Error;
};

class ProjectionDiverged : public Error {
 public:
  using Error::Error;
};

class NotInWindow : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class DegenerateJacobian : public Error {
 public:
  using Error::Error;
};

class ContinuationStalled : public Error {
 public:
  using Error::Error;
};

class ReplayMismatch : public Error {
 public:
  using Error::Error;
};

class VanishingImage : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& reason)
      : Error(key + ": " + reason), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace relayflow

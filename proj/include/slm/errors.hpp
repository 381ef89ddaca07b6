#pragma once

#include <stdexcept>
#include <string>

namespace slm {

/// Base class of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violates an operation's precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A point lies at or behind the camera's image plane.
class BehindCameraError : public Error {
 public:
  using Error::Error;
};

/// RANSAC or least-squares fitting could not produce a model.
class FitError : public Error {
 public:
  using Error::Error;
};

/// A file or record could not be parsed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must agree (e.g. image ids) do not.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given input (e.g. empty ground truth).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// A referenced session, image, or detection does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was requested before the stage it depends on.
class DependencyError : public Error {
 public:
  DependencyError(const std::string& stage, const std::string& missing);
  const std::string& stage() const { return stage_; }
  const std::string& missing() const { return missing_; }

 private:
  std::string stage_;
  std::string missing_;
};

}  // namespace slm

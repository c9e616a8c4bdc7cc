#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace nkca {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scalar argument lies outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Array shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A noise schedule would produce a negative transition variance or
/// mixing weight at some step.
class ScheduleError : public Error {
 public:
  ScheduleError(const std::string& what, std::ptrdiff_t step = -1)
      : Error(what), step_(step) {}

  /// Offending step index, or -1 when the error is not tied to a step.
  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::ptrdiff_t step_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// An enumeration-based routine was asked to handle too many states.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A categorical target has zero probability under the transition model.
class ImpossibleTransition : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training aborted; `checkpoint_path()` names the last-good checkpoint
/// written before the failing step, if any.
class TrainingFault : public Error {
 public:
  TrainingFault(const std::string& what, std::string checkpoint_path)
      : Error(what), checkpoint_path_(std::move(checkpoint_path)) {}

  const std::string& checkpoint_path() const noexcept { return checkpoint_path_; }

 private:
  std::string checkpoint_path_;
};

}  // namespace nkca

#pragma once

#include <stdexcept>
#include <string>

namespace ardm {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kSuccess = 0,
  kConfig = 2,
  kDataFormat = 3,
  kDivergence = 4,
  kPlanningFailure = 5,
};

/// Base of every error raised by the library. Each subclass maps onto one exit code.
class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Dimension mismatch between vectors, batches, models, policies or environments.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ExitCode::kDataFormat, what) {}
};

class NumericInputError : public Error {
 public:
  explicit NumericInputError(const std::string& what) : Error(ExitCode::kDivergence, what) {}
};

/// Non-finite loss, gradient, rollout state or oracle value.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ExitCode::kDivergence, what) {}
};

/// A forward cache was handed to a backward pass it was not produced for.
class CacheError : public Error {
 public:
  explicit CacheError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Autoregressive conditioning buffer carries values for dimensions not yet generated.
class MaskingError : public Error {
 public:
  explicit MaskingError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class UndefinedCorrelationError : public Error {
 public:
  explicit UndefinedCorrelationError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class PlanningError : public Error {
 public:
  explicit PlanningError(const std::string& what) : Error(ExitCode::kPlanningFailure, what) {}
};

}  // namespace ardm

#pragma once

#include <stdexcept>
#include <string>

namespace rvb {

// Coarse classification used by the command-line front end to pick an exit code.
enum class ErrorCategory { Config, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorCategory::Numerical, what) {}
};

class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Poisson log-partition evaluated at an absurd natural parameter.
class OverflowGuard : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularMatrix : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ModeSearchFailed : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IrlsDiverged : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DivergedError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

class LengthMismatch : public DataError {
 public:
  using DataError::DataError;
};

class RankDeficient : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(long line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

class MissingColumn : public DataError {
 public:
  using DataError::DataError;
};

class InvalidResponse : public DataError {
 public:
  using DataError::DataError;
};

class ZeroSd : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

class InvalidV : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace rvb

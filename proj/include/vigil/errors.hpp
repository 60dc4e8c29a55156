#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vigil {

// A configuration value violated its invariant. field() names the offending
// setting ("band", "epoch_seconds", ...).
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Bad argument to a pure operation (band outside Nyquist, length mismatch...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Sample stream broke an invariant (timestamp regression, non-finite value).
class StreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. line() is 1-based; 0 when not line-oriented.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LabelingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Statistic undefined for the given data (zero-variance differences, n < 2).
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Service-level failures. The HTTP layer maps these onto 404 / 409 / 400.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CapacityError : public ConflictError {
 public:
  using ConflictError::ConflictError;
};

class PreconditionError : public ConflictError {
 public:
  using ConflictError::ConflictError;
};

class SourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vigil

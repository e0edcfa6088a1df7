#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace seecg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents disagree. `axis` names the offending axis (e.g. "C_in").
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, std::string axis, const std::string& detail)
      : Error(op + ": shape mismatch on axis " + axis + ": " + detail), axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

// An argument is outside the operation's domain (zero stride, log of a non-positive value, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Misuse of the computation graph (second backward, non-scalar loss, foreign node).
class GraphError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, std::string detail)
      : Error("config field '" + field + "': " + detail), field_(std::move(field)), detail_(std::move(detail)) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string field_;
  std::string detail_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// A binary file is truncated, corrupted, or has an unexpected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace seecg

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace relit {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameter or configuration value (maps to a usage error in the CLI).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Inputs that are individually well-formed but inconsistent with each other,
// e.g. frames of different sizes.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::string what, std::size_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        message_(std::move(what)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  // The message without the offset suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t offset_;
};

// Collects every violation found while validating a structure.
class ValidationError : public DataError {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : DataError(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += "; ";
      out += v[i];
    }
    return out;
  }

  std::vector<std::string> violations_;
};

// Optimization or evaluation produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace relit

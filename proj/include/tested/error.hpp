#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tested {

/// Base of every exception thrown by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad flags, bad configuration values, unknown names.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a contract (missing fields, unknown ids, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Binary or text payload that cannot be decoded.
class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Non-finite values or degenerate geometry during a computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tested

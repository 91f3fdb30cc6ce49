#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace emoprobe {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad shape, out-of-range argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data is inconsistent with what an operation needs (missing ids, empty classes).
class DataError : public Error {
 public:
  using Error::Error;
};

// A file does not follow the expected layout.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Bytes on disk are damaged. Carries the offset where the damage was detected.
class CorruptionError : public FormatError {
 public:
  CorruptionError(const std::string& what, std::uint64_t offset)
      : FormatError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared during probe math. The message names the tensor.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A multi-step run stopped partway; its output directory is marked INCOMPLETE.
class IncompleteRunError : public Error {
 public:
  using Error::Error;
};

}  // namespace emoprobe

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace simnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A vector or matrix did not have the length the operation needs.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& context, std::size_t expected, std::size_t actual)
      : Error(context + ": expected dimension " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// Malformed on-disk data. `offset()` is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// A precondition on an argument did not hold.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Training could not proceed (divergence, impossible sampling, ...).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace simnet

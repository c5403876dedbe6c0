#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cats {

// Base for everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the operation's domain (k outside [0,1), empty sample, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Derivative requested too close to the CATS discontinuity.
class NearThresholdError : public Error {
 public:
  using Error::Error;
};

// Requested workload does not fit in available memory.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file content. Carries the byte offset where parsing gave up.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace cats

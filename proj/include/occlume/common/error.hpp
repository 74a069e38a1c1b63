#pragma once

#include <stdexcept>
#include <string>

namespace occlume {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (OFF, PLY, XYZ, config, manifest).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what), line_(0) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Precondition violated by the caller (bad counts, sizes, ranges).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace occlume

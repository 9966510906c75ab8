#pragma once

#include <stdexcept>
#include <string>

namespace sise {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent model description (manifest, weights, layer graph).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// File-system or format failure. The message always carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sise

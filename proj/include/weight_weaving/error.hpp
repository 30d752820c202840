#pragma once

#include <stdexcept>
#include <string>

namespace ww {

// Root of every error the library throws. The CLI maps ValidationError to
// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or malformed user-supplied tables/specs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint container does not decode.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Two TensorMaps that must share a schema do not.
class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace ww

#pragma once

#include <stdexcept>
#include <string>

namespace failcast {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/array shapes or lengths disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument lies outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A NetworkSpec is invalid or two specs are incompatible.
class SpecError : public Error {
 public:
  using Error::Error;
};

// A binary file (checkpoint, dataset) is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Dataset content is unusable for the requested operation.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// An internal invariant was violated.
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Two evaluation reports cannot be compared.
class ComparisonError : public Error {
 public:
  using Error::Error;
};

// Pipeline configuration is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace failcast

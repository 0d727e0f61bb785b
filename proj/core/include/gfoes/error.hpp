#pragma once

#include <stdexcept>
#include <string>

namespace gfoes {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidLabelError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf appeared in a value that must stay finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InvalidSplitError : public Error {
 public:
  using Error::Error;
};

/// Forgotten-class data reached an operation that must never see it.
class ZeroGlanceViolation : public Error {
 public:
  using Error::Error;
};

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gfoes

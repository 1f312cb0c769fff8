#pragma once

#include <stdexcept>
#include <string>

namespace srknots {

// Base of every error raised by the library. Each subclass corresponds to one
// named failure mode of an operation so callers can dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DegenerateProcess : public Error {
 public:
  using Error::Error;
};

class NearSingular : public Error {
 public:
  using Error::Error;
};

class Unconverged : public Error {
 public:
  using Error::Error;
};

class NotAMaximum : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class NonPositiveDenominator : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

}  // namespace srknots

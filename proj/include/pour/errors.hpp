#pragma once

#include <stdexcept>
#include <string>

namespace pour {

// Base of every error the library raises. The CLI maps any of these to a
// nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class NoModelFound : public Error {
 public:
  using Error::Error;
};

// Raised when the reduced-diameter search region holds no points. The pour
// controller treats this as a signal rather than a failure.
class NoLiquidVisible : public Error {
 public:
  using Error::Error;
};

class InvalidRefractiveIndex : public Error {
 public:
  using Error::Error;
};

class InvalidDt : public Error {
 public:
  using Error::Error;
};

class NonMonotonicTimestamp : public Error {
 public:
  using Error::Error;
};

class InvalidTarget : public Error {
 public:
  using Error::Error;
};

class TrialTimeout : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class InvalidPlan : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

}  // namespace pour

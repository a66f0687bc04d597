#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace adiabatic {

/// Short scientific rendering for diagnostics.
inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter or precondition check failed before any numerics ran.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Paths or systems that must share a parameter range do not.
class DomainMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Everything below signals a numerical failure rather than bad input.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class DegenerateSpectrum : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class GridTooCoarse : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class QuadratureFailure : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class ConvergenceFailure : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

/// Segment unitary too far from the identity for an unambiguous logarithm.
class PrincipalLogFailure : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

/// The error-vs-slowdown curve was not monotone inside a bisection bracket.
class MonotonicityViolation : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class PlateauNotDetected : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

}  // namespace adiabatic

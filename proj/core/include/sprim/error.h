#pragma once

#include <stdexcept>
#include <string>

namespace sprim {

// Base class for every error raised by the library. The CLI maps all of these
// to exit status 2 (data or convergence failure).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric precondition was violated (point behind camera, non-positive depth,
// image too small for the requested pyramid).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A file is missing, truncated or inconsistent with the bundle layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

// The problem is ill-posed: no active primitives, too few associations,
// nothing to fit against.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// An iterative solve produced a non-finite value or otherwise broke down.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace sprim

#pragma once

#include <stdexcept>
#include <string>

namespace hbb {

// Base of every error raised by the library. The subclasses map onto the
// failure categories callers branch on (the CLI turns validation-type errors
// into exit code 2 and everything else into exit code 1).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A distribution or estimator parameter is outside its domain
// (non-positive Gamma shape, negative concentration, alpha < 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Input is well-typed but carries no information to sample from
// (all-zero Dirichlet concentration, n = 0).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A stratum with no members was given to an estimator that needs data.
class EmptyStratumError : public Error {
 public:
  using Error::Error;
};

// Floating point failure the sampler could not recover from.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Model specification does not match the data (e.g. counts with logistic).
class SpecificationError : public Error {
 public:
  using Error::Error;
};

// The log posterior is not finite at the initial state.
class InitializationError : public Error {
 public:
  using Error::Error;
};

// Structural validation of user-supplied containers (shapes, ranges, simplex).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Index out of range (draw index, atom index, stratum index).
class BoundsError : public Error {
 public:
  using Error::Error;
};

// A causal contrast is undefined for the arm means at hand.
class ContrastError : public Error {
 public:
  using Error::Error;
};

// Problems in user data files: missing cells, unparsable numbers, unknown
// columns.
class DataError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hbb

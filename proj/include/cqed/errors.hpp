#pragma once

#include <stdexcept>
#include <string>

namespace cqed {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Basis index or matrix dimension out of range.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Subsystem indices or layouts that do not fit together.
class LayoutError : public Error {
 public:
  using Error::Error;
};

// Zero-norm superpositions, zero coefficients where a ratio is needed.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class UnitarityError : public Error {
 public:
  using Error::Error;
};

// Parameters outside the domain of a closed form or protocol.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Subsystems that were required to be in a product state are not.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

// Fock cutoff too small for the initial excitation number.
class TruncationError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  using Error::Error;
};

// Simulated branches that have no counterpart in an analytic table.
class ComparisonError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class EmitError : public Error {
 public:
  using Error::Error;
};

}  // namespace cqed

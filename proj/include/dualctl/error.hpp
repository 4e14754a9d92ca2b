#pragma once

#include <stdexcept>
#include <string>

namespace dualctl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated (dimensions, ranges, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Regressors do not have full row rank; `rank` is the numerical rank found.
class UnderdeterminedData : public Error {
 public:
  UnderdeterminedData(const std::string& what, int rank, int required)
      : Error(what), rank_(rank), required_(required) {}
  int rank() const { return rank_; }
  int required() const { return required_; }

 private:
  int rank_;
  int required_;
};

/// An FIR response that cannot be realized (e.g. Phi_x(1) != I).
class InvalidResponse : public Error {
 public:
  using Error::Error;
};

/// A closed loop that was required to be stable is not.
class Instability : public Error {
 public:
  using Error::Error;
};

/// A convex program had no feasible point (or the solver could not find one).
class Infeasible : public Error {
 public:
  using Error::Error;
};

/// Malformed user input: config files, CSV, model files.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace dualctl

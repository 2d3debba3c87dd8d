#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace onlc {

//! Root of every exception thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

//! An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
  public:
    using Error::Error;
};

//! Inconsistent or invalid configuration (bounds, profile goals, options).
class ConfigError : public Error {
  public:
    using Error::Error;
};

//! A CSV row could not be converted into a record.
class ParseError : public Error {
  public:
    ParseError(std::size_t line, const std::string &message)
        : Error("line " + std::to_string(line) + ": " + message), line_{line} {}

    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

//! A well-formed input violated a collection-level rule (duplicate dates).
class IngestionError : public Error {
  public:
    using Error::Error;
};

//! A required field has no observation to impute from.
class ImputationError : public Error {
  public:
    using Error::Error;
};

//! Training produced no usable data or diverged.
class TrainingError : public Error {
  public:
    using Error::Error;
};

//! A model cannot be used with the requested architecture.
class IncompatibleModelError : public Error {
  public:
    using Error::Error;
};

//! Retraining data overlaps the span already trained on.
class OverlapError : public Error {
  public:
    using Error::Error;
};

//! A value falls outside every band of a penalty lookup.
class CoverageError : public Error {
  public:
    CoverageError(std::string variable, const std::string &message)
        : Error(message), variable_{std::move(variable)} {}

    const std::string &variable() const noexcept { return variable_; }

  private:
    std::string variable_;
};

//! A linear penalty approximation cannot be fitted.
class FitError : public Error {
  public:
    using Error::Error;
};

//! No meal plan satisfies the requested targets.
class InfeasibleError : public Error {
  public:
    InfeasibleError(std::string binding, const std::string &message)
        : Error(message), binding_{std::move(binding)} {}

    //! Name of the constraint that could not be met.
    const std::string &binding() const noexcept { return binding_; }

  private:
    std::string binding_;
};

//! An API was called out of order (e.g. simulating an uninitialized state).
class UsageError : public Error {
  public:
    using Error::Error;
};

// Service-level errors; the HTTP layer maps each onto a status code.
class NotFoundError : public Error {
  public:
    using Error::Error;
};

class ConflictError : public Error {
  public:
    using Error::Error;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class PreconditionError : public Error {
  public:
    using Error::Error;
};

} // namespace onlc

#pragma once

#include <stdexcept>
#include <string>

namespace pbcert {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed argument: wrong dimension, value out of range, bad config.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The requested bound constant cannot be evaluated (enumeration too large,
/// or the closed form applied outside m >= M).
class InfeasibleMode : public Error {
public:
    using Error::Error;
};

/// A risk vector on the boundary of the simplex was handed to a routine that
/// needs strictly positive coordinates.
class BoundaryRisk : public Error {
public:
    using Error::Error;
};

/// Root bracketing or bisection failed to converge within its iteration cap.
class SolverFailure : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite gradient or objective.
class TrainingFailure : public Error {
public:
    using Error::Error;
};

}  // namespace pbcert

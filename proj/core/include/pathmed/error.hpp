#pragma once

#include <stdexcept>
#include <string>

namespace pathmed {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input data or configuration (missing column, non-numeric cell, K < 2, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A fit or estimator could not produce a usable result.
class EstimationError : public Error {
public:
    using Error::Error;
};

} // namespace pathmed

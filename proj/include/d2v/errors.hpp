#pragma once

#include <stdexcept>
#include <string>

namespace d2v {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined by an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Broken pre-condition on a call (wrong rank, bad axis, non-scalar loss, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed text input: timestamps, CSV cells, config values.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A data file parsed but failed a structural check.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A date lies outside the loaded lunar table.
class CoverageError : public Error {
public:
    using Error::Error;
};

/// A value became unusable for further computation (NaN loss, zero scale).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace d2v

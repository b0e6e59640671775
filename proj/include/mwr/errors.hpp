#pragma once

#include <stdexcept>
#include <string>

namespace mwr {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied parameter is outside its documented domain.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Input data is malformed: bad file contents, I/O failure, non-finite values.
class DataError : public Error {
public:
    using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public DataError {
public:
    using DataError::DataError;
};

/// Operand dimensions are incompatible.
class ShapeError : public DataError {
public:
    using DataError::DataError;
};

/// A numerical routine could not produce a result.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Normal-equation system is singular (or not positive definite).
class SingularSystemError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A CP component has a zero column in some mode.
class DegenerateComponentError : public NumericalError {
public:
    DegenerateComponentError(std::size_t component, const std::string& what)
        : NumericalError(what), component_(component) {}
    [[nodiscard]] std::size_t component() const { return component_; }

private:
    std::size_t component_;
};

} // namespace mwr

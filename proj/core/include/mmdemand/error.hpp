#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmdemand {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data contradicts itself (negative vehicle counts, overlapping trips,
/// a trip leaving an empty cell).
class DataIntegrityError : public Error {
public:
    using Error::Error;
};

/// A model parameter cannot be realized by the threshold distribution.
class InfeasibleParameterError : public Error {
public:
    InfeasibleParameterError(std::string what, double lo, double hi)
        : Error(std::move(what)), lo_(lo), hi_(hi) {}

    /// Open interval of achievable values.
    double achievable_low() const noexcept { return lo_; }
    double achievable_high() const noexcept { return hi_; }

private:
    double lo_;
    double hi_;
};

struct FieldError {
    std::string field;
    std::string message;
};

/// One or more user-supplied parameters failed validation.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<FieldError> errors);
    ValidationError(std::string field, std::string message)
        : ValidationError(std::vector<FieldError>{{std::move(field), std::move(message)}}) {}

    const std::vector<FieldError>& errors() const noexcept { return errors_; }

private:
    std::vector<FieldError> errors_;
};

/// Malformed or unreadable input file.
class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace mmdemand

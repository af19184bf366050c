#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lmerepro {

// Input-side failures such as malformed files or unknown columns.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyDataError : public DataError {
public:
    using DataError::DataError;
};

// Bad model specifications, e.g. a formula that does not parse or a
// comparison of models that are not nested.
class SpecError : public DataError {
public:
    using DataError::DataError;
};

// Failures of the numerical core (singular systems, non-finite deviance).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lmerepro

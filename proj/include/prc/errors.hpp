#pragma once

#include <stdexcept>
#include <string>

namespace prc {

// Error taxonomy. Exit-code mapping lives in the CLI: schema/parse/domain/
// alignment/metric errors -> 2, fit/validation errors -> 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

class AlignmentError : public Error {
public:
    explicit AlignmentError(const std::string& msg) : Error(msg) {}
};

class FitError : public Error {
public:
    explicit FitError(const std::string& msg) : Error(msg) {}
};

class MetricError : public Error {
public:
    explicit MetricError(const std::string& msg) : Error(msg) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

} // namespace prc

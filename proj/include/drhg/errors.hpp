#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace drhg {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IndexError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class KindError : public Error { using Error::Error; };
class SizeError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class InfeasibleError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ConsistencyError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class UnsupportedFormatError : public Error { using Error::Error; };
class NumericalError : public Error { using Error::Error; };

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace drhg

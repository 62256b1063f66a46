#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace semdtm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Syntax errors in grid/CSV text, constraint expressions and pipeline specs.
// Grid and CSV errors carry 1-based line/column; constraint errors carry a
// 0-based character offset.
class ParseError : public Error {
public:
    ParseError(std::string message, std::size_t line, std::size_t column);
    ParseError(std::string message, std::size_t offset);
    explicit ParseError(std::string message);

    const std::string& message() const { return message_; }
    std::optional<std::size_t> line() const { return line_; }
    std::optional<std::size_t> column() const { return column_; }
    std::optional<std::size_t> offset() const { return offset_; }

private:
    std::string message_;
    std::optional<std::size_t> line_;
    std::optional<std::size_t> column_;
    std::optional<std::size_t> offset_;
};

// Array shape/rank precondition failures.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Names that do not resolve: slots, transforms, stages, parameters.
class BindingError : public Error {
public:
    using Error::Error;
};

// Arguments outside an operation's documented domain (counts, magnitudes,
// tolerances).
class PreconditionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace semdtm

#include "semdtm/error.hpp"

#include <utility>

namespace semdtm {

ParseError::ParseError(std::string message, std::size_t line, std::size_t column)
    : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      message_(std::move(message)),
      line_(line),
      column_(column) {}

ParseError::ParseError(std::string message, std::size_t offset)
    : Error("offset " + std::to_string(offset) + ": " + message),
      message_(std::move(message)),
      offset_(offset) {}

ParseError::ParseError(std::string message) : Error(message), message_(std::move(message)) {}

}  // namespace semdtm

#pragma once

#include <stdexcept>
#include <string>

namespace thermoproto {

// Input violates a documented invariant or precondition. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened, read, or written. Maps to CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content; carries the offending location.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, std::size_t column, const std::string& what)
      : ValidationError(format(file, line, column, what)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& file, std::size_t line, std::size_t column,
                            const std::string& what) {
    std::string msg = file + ":" + std::to_string(line);
    if (column > 0) msg += ":" + std::to_string(column);
    return msg + ": " + what;
  }

  std::size_t line_;
  std::size_t column_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace thermoproto

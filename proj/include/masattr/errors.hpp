#pragma once

#include <stdexcept>
#include <string>

namespace masattr {

// Bad or unreadable input (maps to CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A malformed record in a line-oriented input; carries the 1-based line number.
class ParseError : public InputError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A structurally valid document that breaks a domain invariant.
class InvariantError : public InputError {
 public:
  using InputError::InputError;
};

// An analysis stage could not run on otherwise valid input (exit code 3).
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace masattr

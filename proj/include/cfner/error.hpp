#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfner {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed CoNLL input. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient went non-finite; `component()` names the loss term.
class NumericError : public Error {
 public:
  NumericError(std::string component, const std::string& what)
      : Error(component + ": " + what), component_(std::move(component)) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfner

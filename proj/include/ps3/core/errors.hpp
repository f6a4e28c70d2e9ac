#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ps3 {

// Base for every error raised by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or grid sizes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied argument outside the operation's domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (encoder, training, scene or schedule files).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Parse failure at a known line of a text file (1-based).
class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values during training or gradient checking.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ps3

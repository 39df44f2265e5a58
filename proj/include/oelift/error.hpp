#pragma once

#include <stdexcept>
#include <string>

namespace oelift {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent file contents: bad magic, truncation, parse
// failures. Messages name the offending file and, where known, the line
// or byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: missing inputs, mismatched dimensions, unknown
// method or format names. The CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace oelift

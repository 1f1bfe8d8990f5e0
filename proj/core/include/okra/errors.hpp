#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace okra {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corpus file could not be read or a record is malformed. line() is 1-based,
// 0 when the failure is not tied to a line.
class IngestError : public Error {
 public:
  IngestError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class RetrievalError : public Error {
 public:
  using Error::Error;
};

class AnalysisParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace okra

#pragma once

#include <stdexcept>
#include <string>

namespace emde {

// Base of every error the library raises. The CLI maps the subclasses onto
// exit codes: ConfigError -> 2, DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. Carries the offending 1-based line number when known.
class FormatError : public DataError {
 public:
  FormatError(const std::string& path, std::size_t line, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class MissingMetadataError : public DataError {
 public:
  using DataError::DataError;
};

// Broken caller precondition (shape mismatch, empty pool, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace emde

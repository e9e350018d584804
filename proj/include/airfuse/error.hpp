#pragma once

#include <stdexcept>
#include <string>

namespace airfuse {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class InvalidCoordinate : public Error {
public:
  using Error::Error;
};

class OutOfDomain : public Error {
public:
  using Error::Error;
};

// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
public:
  ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  long line() const { return line_; }

private:
  long line_;
};

class DuplicateKey : public Error {
public:
  using Error::Error;
};

class SingularDesign : public Error {
public:
  using Error::Error;
};

class BudgetExceeded : public Error {
public:
  using Error::Error;
};

class NoNeighbor : public Error {
public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
public:
  using Error::Error;
};

class InsufficientData : public Error {
public:
  using Error::Error;
};

class NumericalError : public Error {
public:
  using Error::Error;
};

class MissingCovariate : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class DataIntegrity : public Error {
public:
  using Error::Error;
};

class LeakageError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace airfuse

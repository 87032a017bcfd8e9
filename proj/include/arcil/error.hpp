#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace arcil {

// Every failure the library reports derives from Error so callers (the CLI in
// particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class UndefinedValueError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A loss or intermediate value became NaN/Inf. `index` names the offending
// batch row when known.
class NumericError : public Error {
 public:
  static constexpr std::size_t kNoIndex = static_cast<std::size_t>(-1);

  explicit NumericError(const std::string& what, std::size_t index = kNoIndex)
      : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

}  // namespace arcil

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fiona {

// Base of every error the engine throws. The CLI maps the two families
// (input problems vs. runtime problems) onto exit codes 2 and 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input too small for the operation (conv longer than signal, pooling of length 1, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// EER requested on a score set that lacks one of the two classes.
class MetricUndefinedError : public Error {
 public:
  using Error::Error;
};

// CKA on a batch whose features carry no centered variance on one side.
class DegenerateBatchError : public Error {
 public:
  enum class Side { first, second };

  DegenerateBatchError(Side side, const std::string& what)
      : Error(what), side_(side) {}

  Side side() const noexcept { return side_; }

 private:
  Side side_;
};

}  // namespace fiona

#pragma once

#include <stdexcept>
#include <string>

namespace gamekd {

// Base for all library errors. Subclasses map onto CLI exit codes:
// ConfigError -> 2, DataError/InputError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Bad run configuration: invalid dimensions, missing paths, unknown keys.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Corpus/file problems: parse failures, invariant violations, missing columns.
class DataError : public Error {
public:
  using Error::Error;
};

// Bad arguments to an in-process operation: shape mismatches, out-of-vocab
// ids, invalid targets.
class InputError : public Error {
public:
  using Error::Error;
};

// Non-finite values encountered where finite math was required.
class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace gamekd

#pragma once

#include <stdexcept>
#include <string>

namespace promptguard {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input supplied by the caller (missing file, unknown option, bad flag).
// The CLI maps this to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents: bad rows, corrupt caches, schema mismatches.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training or inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace promptguard

#pragma once

#include <stdexcept>
#include <string>

namespace segscribe {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, annotations, shapes).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or configuration supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace segscribe

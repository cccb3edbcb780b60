#pragma once

#include <stdexcept>
#include <string>

namespace medalign {

// Base for every error the toolkit raises on purpose. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, unknown enum names, invalid configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed input records, violated record invariants, integrity failures.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace medalign

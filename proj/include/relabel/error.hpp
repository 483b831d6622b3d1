#pragma once

#include <stdexcept>
#include <string>

namespace relabel {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad k, dimension mismatch...).
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("InvalidArgument: " + what) {}
};

/// A file could not be opened, is truncated, or does not follow its format.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("FormatError: " + what) {}
};

class UnknownImage : public Error {
 public:
  explicit UnknownImage(const std::string& id) : Error("UnknownImage: no record for '" + id + "'") {}
};

/// Training produced non-finite parameters.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("DivergenceError: " + what) {}
};

}  // namespace relabel

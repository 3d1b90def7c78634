#pragma once

#include <stdexcept>
#include <string>

namespace splite {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or invariant of an operation was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A required named parameter is absent from a weight store.
class MissingParameter : public Error {
 public:
  explicit MissingParameter(const std::string& name)
      : Error("missing parameter: " + name), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

namespace detail {
[[noreturn]] inline void fail(const std::string& what) { throw InvalidArgument(what); }
}  // namespace detail

#define SPLITE_CHECK(cond, msg)                 \
  do {                                          \
    if (!(cond)) ::splite::detail::fail((msg)); \
  } while (0)

}  // namespace splite

#pragma once

#include <stdexcept>
#include <string>

namespace slrkit {

/// Base error for all toolkit failures. The C API maps subclasses to
/// error codes; everything else surfaces as a runtime error.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid argument, malformed input, or contract violation by the caller.
class InvalidArgument : public Error {
  public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

/// Filesystem / container / socket failures.
class IoError : public Error {
  public:
    explicit IoError(const std::string& what) : Error(what) {}
};

/// Lookup of an id or key that does not exist.
class NotFound : public Error {
  public:
    explicit NotFound(const std::string& what) : Error(what) {}
};

/// Run-config parse or validation failure (maps to exit code 1).
class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace slrkit

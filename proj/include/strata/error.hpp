#pragma once

#include <stdexcept>
#include <string>

namespace strata {

/// Base class for every error the library throws. `code()` is a short
/// stable identifier the CLI prints in its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("parse", what) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error("integrity", what) {}
};

class ConfigMismatchError : public Error {
 public:
  explicit ConfigMismatchError(const std::string& what)
      : Error("config_mismatch", what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace strata

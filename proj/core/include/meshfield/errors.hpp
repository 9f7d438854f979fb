#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshfield {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Mathematically undefined input, e.g. normalizing a zero vector.
class NumericDomainError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed mesh / manifest / checkpoint content. `line()` is 1-based, 0 if unknown.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Failure inside an embedding backend (transport, protocol or service side).
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int http_status = 0, int attempts = 0)
      : Error(what), http_status_(http_status), attempts_(attempts) {}
  int http_status() const noexcept { return http_status_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int http_status_;
  int attempts_;
};

/// Some, but not all, of a batch of evaluations failed.
class PartialResultError : public Error {
 public:
  PartialResultError(const std::string& what, std::vector<std::size_t> failed)
      : Error(what), failed_(std::move(failed)) {}
  const std::vector<std::size_t>& failed() const noexcept { return failed_; }

 private:
  std::vector<std::size_t> failed_;
};

}  // namespace meshfield

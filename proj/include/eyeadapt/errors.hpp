#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace eyeadapt {

/// Broad failure classes. Each maps to one process exit code in the CLI.
enum class ErrorKind {
  kConfig,      // invalid configuration, precondition or usage
  kData,        // I/O, malformed files, missing artifacts
  kDivergence,  // a training loss became non-finite
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Malformed on-disk content; carries the offending entry id when known.
class FormatError : public DataError {
 public:
  FormatError(std::string entry_id, const std::string& what)
      : DataError(entry_id.empty() ? what : "entry '" + entry_id + "': " + what),
        entry_id_(std::move(entry_id)) {}

  const std::string& entry_id() const noexcept { return entry_id_; }

 private:
  std::string entry_id_;
};

class GeometryError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorKind::kDivergence, what) {}
};

std::string_view to_string(ErrorKind kind);

/// Exit codes: 0 ok, 2 config error, 3 data error, 4 divergence.
int exit_code(ErrorKind kind);

}  // namespace eyeadapt

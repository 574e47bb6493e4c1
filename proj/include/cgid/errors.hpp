#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cgid {

// Incompatible matrix or parameter shapes.
class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A caller violated an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user-facing configuration. `path` is the dotted field path when known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, std::string path = {})
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class IngestionError : public std::runtime_error {
 public:
  IngestionError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric whose formula is undefined for the supplied values (e.g. division by zero).
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reports that cannot be compared (different data source or split).
class ComparisonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cgid

#pragma once

#include <stdexcept>
#include <string>

namespace ctxlstm {

/// Invalid configuration: shapes, variants, or option values that cannot work together.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse detected at run time (missing inputs, repeated backward, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-specific.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Training diverged (non-finite loss or gradients).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ctxlstm

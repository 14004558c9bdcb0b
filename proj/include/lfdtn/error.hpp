#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lfdtn {

/// Bad arguments or configuration. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file. Carries the byte offset where parsing stopped.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

/// Numerical failure at runtime (NOLA violation, divergence). Maps to exit code 2.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace lfdtn

#pragma once

#include <stdexcept>
#include <string>

namespace samcl {

// Caller broke a documented precondition (shape mismatch, out-of-range label, ...).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file or stream; offset is the byte position of the problem.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

// Numeric failure: NaN loss, gradcheck breach, non-finite values.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Cholesky factorization hit a non-positive pivot.
class SingularMatrixError : public NumericError {
 public:
  SingularMatrixError(const std::string& msg, int pivot_index)
      : NumericError(msg + " (pivot " + std::to_string(pivot_index) + ")"),
        pivot(pivot_index) {}
  int pivot;
};

// A region statistic was requested on an empty region.
class StatsError : public std::runtime_error {
 public:
  explicit StatsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Run-config problem; `pointer` is a JSON-pointer-style path into the document.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& pointer, const std::string& msg)
      : std::runtime_error(pointer + ": " + msg), pointer_path(pointer) {}
  std::string pointer_path;
};

}  // namespace samcl

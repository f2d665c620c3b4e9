#pragma once

#include <stdexcept>
#include <string>

namespace rdsgan {

// Shape or precondition violation on a math op.
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or inconsistent input data (corpora, checkpoints, vocabularies).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite ones are required, failed gradient checks.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Bad command line or run configuration.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rdsgan

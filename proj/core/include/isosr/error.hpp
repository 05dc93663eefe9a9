#pragma once

#include <stdexcept>
#include <string>

namespace isosr {

// Error taxonomy maps onto process exit codes: usage 1, data 2, numeric 3.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : DataError {
  explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

}  // namespace isosr

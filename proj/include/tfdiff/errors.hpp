#pragma once

#include <stdexcept>
#include <string>

namespace tfdiff {

// Error taxonomy mirrored by the CLI exit codes:
// validation 2, io 3, numeric 4, artifact mismatch 5.
struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct artifact_mismatch : std::runtime_error {
  explicit artifact_mismatch(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tfdiff

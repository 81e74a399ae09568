#pragma once

#include <stdexcept>
#include <string>

namespace exg {

// Bad configs, bad arguments, schema violations. CLI exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& m) : std::runtime_error(m) {}
};

// Runtime/training failures (divergence, missing files mid-run). CLI exit code 3.
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& m) : std::runtime_error(m) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace exg

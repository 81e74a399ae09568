#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

namespace exg {

// Dense row-major nd-array of doubles. Just storage + shape; all math goes
// through the kernels/linalg layer.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  double& at2(std::int64_t i, std::int64_t j) {
    return data[static_cast<std::size_t>(i * shape[1] + j)];
  }
  double at2(std::int64_t i, std::int64_t j) const {
    return data[static_cast<std::size_t>(i * shape[1] + j)];
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  void resize(std::vector<std::int64_t> s) {
    shape = std::move(s);
    data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }
};

}  // namespace exg

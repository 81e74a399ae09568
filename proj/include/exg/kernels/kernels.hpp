#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace exg::kernels {

// Hot data-parallel loops, double precision. Every entry has a scalar
// reference implementation and (on x86-64 with AVX2) a vectorized variant.
// The active table is picked once at startup from CPU features and can be
// forced with set_backend() or the EXG_KERNELS env var.
struct Backend {
  const char* name;
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);  // y += a*x
  void (*scal)(double a, double* x, std::size_t n);                   // x *= a
  void (*vadd)(const double* x, double* y, std::size_t n);            // y += x
  void (*vmul)(const double* x, const double* y, double* z, std::size_t n);
  // h = decay .* h + b * bv   (state-recurrence inner step)
  void (*decay_axpy)(const double* decay, double b, const double* bv, double* h,
                     std::size_t n);
  void (*vexp)(const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*sumsq)(const double* x, std::size_t n);
  double (*asum_diff)(const double* x, const double* y, std::size_t n);  // sum |x-y|
};

const Backend& active();
const Backend& scalar();

// Returns false if the named backend is unavailable on this machine.
bool set_backend(const std::string& name);
std::vector<std::string> available();

}  // namespace exg::kernels

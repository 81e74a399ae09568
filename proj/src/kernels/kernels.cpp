#include "exg/kernels/kernels.hpp"

#include <cmath>
#include <cstdlib>

#include "exg/kernels/exp_core.hpp"

namespace exg::kernels {

namespace scalar_impl {

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scal(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void vadd(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void vmul(const double* x, const double* y, double* z, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

void decay_axpy(const double* decay, double b, const double* bv, double* h,
                std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) h[i] = decay[i] * h[i] + b * bv[i];
}

void vexp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = detail::exp_core(x[i]);
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sumsq(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double asum_diff(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(x[i] - y[i]);
  return acc;
}

}  // namespace scalar_impl

static const Backend kScalar = {
    "scalar",
    scalar_impl::dot,
    scalar_impl::axpy,
    scalar_impl::scal,
    scalar_impl::vadd,
    scalar_impl::vmul,
    scalar_impl::decay_axpy,
    scalar_impl::vexp,
    scalar_impl::sum,
    scalar_impl::sumsq,
    scalar_impl::asum_diff,
};

#ifdef EXG_BUILD_AVX2
const Backend& avx2_backend();  // kernels_avx2.cpp
static bool avx2_usable() { return __builtin_cpu_supports("avx2"); }
#endif

static const Backend* pick_default() {
#ifdef EXG_BUILD_AVX2
  if (const char* env = std::getenv("EXG_KERNELS")) {
    if (std::string(env) == "scalar") return &kScalar;
  }
  if (avx2_usable()) return &avx2_backend();
#endif
  return &kScalar;
}

static const Backend* g_active = pick_default();

const Backend& active() { return *g_active; }
const Backend& scalar() { return kScalar; }

bool set_backend(const std::string& name) {
  if (name == "scalar") {
    g_active = &kScalar;
    return true;
  }
#ifdef EXG_BUILD_AVX2
  if (name == "avx2" && avx2_usable()) {
    g_active = &avx2_backend();
    return true;
  }
#endif
  return false;
}

std::vector<std::string> available() {
  std::vector<std::string> out = {"scalar"};
#ifdef EXG_BUILD_AVX2
  if (avx2_usable()) out.push_back("avx2");
#endif
  return out;
}

}  // namespace exg::kernels

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "exg/kernels/exp_core.hpp"
#include "exg/kernels/kernels.hpp"

namespace exg::kernels {
namespace avx2_impl {

static inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot(const double* x, const double* y, std::size_t n) {
  std::size_t i = 0;
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double res = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) res += x[i] * y[i];
  return res;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scal(double a, double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void vadd(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

void vmul(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

void decay_axpy(const double* decay, double b, const double* bv, double* h,
                std::size_t n) {
  const __m256d bvv = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d hv = _mm256_mul_pd(_mm256_loadu_pd(decay + i), _mm256_loadu_pd(h + i));
    hv = _mm256_fmadd_pd(bvv, _mm256_loadu_pd(bv + i), hv);
    _mm256_storeu_pd(h + i, hv);
  }
  for (; i < n; ++i) h[i] = decay[i] * h[i] + b * bv[i];
}

// Same range reduction + rational approximation as detail::exp_core.
static inline __m256d exp4(__m256d x) {
  using namespace detail;
  const __m256d clamp = _mm256_set1_pd(kExpClamp);
  x = _mm256_min_pd(x, clamp);
  x = _mm256_max_pd(x, _mm256_sub_pd(_mm256_setzero_pd(), clamp));

  __m256d kd = _mm256_mul_pd(x, _mm256_set1_pd(kLog2E));
  kd = _mm256_round_pd(kd, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);

  __m256d r = _mm256_fnmadd_pd(kd, _mm256_set1_pd(kExpC1), x);
  r = _mm256_fnmadd_pd(kd, _mm256_set1_pd(kExpC2), r);
  const __m256d rr = _mm256_mul_pd(r, r);

  __m256d p = _mm256_fmadd_pd(_mm256_set1_pd(kExpP0), rr, _mm256_set1_pd(kExpP1));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(kExpP2));
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_fmadd_pd(_mm256_set1_pd(kExpQ0), rr, _mm256_set1_pd(kExpQ1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(kExpQ2));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(kExpQ3));

  const __m256d e = _mm256_add_pd(
      _mm256_set1_pd(1.0),
      _mm256_div_pd(_mm256_add_pd(p, p), _mm256_sub_pd(q, p)));

  __m128i ki = _mm256_cvtpd_epi32(kd);
  __m256i ki64 = _mm256_cvtepi32_epi64(ki);
  __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ki64, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
}

void vexp(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = detail::exp_core(x[i]);
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double res = hsum(acc);
  for (; i < n; ++i) res += x[i];
  return res;
}

double sumsq(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double res = hsum(acc);
  for (; i < n; ++i) res += x[i] * x[i];
  return res;
}

double asum_diff(const double* x, const double* y, std::size_t n) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(signmask, d));
  }
  double res = hsum(acc);
  for (; i < n; ++i) res += std::fabs(x[i] - y[i]);
  return res;
}

}  // namespace avx2_impl

const Backend& avx2_backend() {
  static const Backend table = {
      "avx2",
      avx2_impl::dot,
      avx2_impl::axpy,
      avx2_impl::scal,
      avx2_impl::vadd,
      avx2_impl::vmul,
      avx2_impl::decay_axpy,
      avx2_impl::vexp,
      avx2_impl::sum,
      avx2_impl::sumsq,
      avx2_impl::asum_diff,
  };
  return table;
}

}  // namespace exg::kernels

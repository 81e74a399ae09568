#pragma once

// Shared exp() algorithm used by both the scalar and the SIMD kernel
// backends, so the two stay numerically aligned lane-for-lane. Classic
// range-reduced rational approximation (Cephes expl-style): accurate to a
// few ulp over the clamped range.

#include <cstdint>
#include <cstring>

namespace exg::kernels::detail {

inline constexpr double kExpClamp = 700.0;
inline constexpr double kLog2E = 1.4426950408889634073599;
inline constexpr double kExpC1 = 6.93145751953125e-1;
inline constexpr double kExpC2 = 1.42860682030941723212e-6;
inline constexpr double kExpP0 = 1.26177193074810590878e-4;
inline constexpr double kExpP1 = 3.02994407707441961300e-2;
inline constexpr double kExpP2 = 9.99999999999999999910e-1;
inline constexpr double kExpQ0 = 3.00198505138664455042e-6;
inline constexpr double kExpQ1 = 2.52448340349684104192e-3;
inline constexpr double kExpQ2 = 2.27265548208155028766e-1;
inline constexpr double kExpQ3 = 2.00000000000000000005e0;

inline double exp_core(double x) {
  if (x > kExpClamp) x = kExpClamp;
  if (x < -kExpClamp) x = -kExpClamp;
  double kd = x * kLog2E;
  kd = (kd >= 0.0) ? static_cast<double>(static_cast<long long>(kd + 0.5))
                   : static_cast<double>(static_cast<long long>(kd - 0.5));
  double r = x - kd * kExpC1;
  r -= kd * kExpC2;
  const double rr = r * r;
  const double p = r * ((kExpP0 * rr + kExpP1) * rr + kExpP2);
  const double q = ((kExpQ0 * rr + kExpQ1) * rr + kExpQ2) * rr + kExpQ3;
  const double e = 1.0 + 2.0 * p / (q - p);
  // scale by 2^k through the exponent bits
  const long long ki = static_cast<long long>(kd);
  const std::uint64_t bits = static_cast<std::uint64_t>(ki + 1023) << 52;
  double pow2;
  std::memcpy(&pow2, &bits, sizeof pow2);
  return e * pow2;
}

}  // namespace exg::kernels::detail

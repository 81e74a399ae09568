#pragma once

#include <cstddef>
#include <cstdint>

#include "exg/kernels/kernels.hpp"
#include "exg/threadpool.hpp"

namespace exg::linalg {

// below this many flops the thread-pool dispatch costs more than it saves
inline constexpr std::int64_t kParallelFlopThreshold = 1 << 23;

// Y[m,n] = X[m,k] * W[n,k]^T  (+ optional bias[n]); W stored row-major by
// output. Row-parallel, deterministic.
inline void matmul_nt(const double* X, const double* W, const double* bias,
                      double* Y, std::int64_t m, std::int64_t k, std::int64_t n) {
  const auto& K = kernels::active();
  auto body = [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t i = r0; i < r1; ++i) {
      const double* xi = X + i * k;
      double* yi = Y + i * n;
      for (std::int64_t j = 0; j < n; ++j)
        yi[j] = K.dot(xi, W + j * k, static_cast<std::size_t>(k)) + (bias ? bias[j] : 0.0);
    }
  };
  if (m * k * n < kParallelFlopThreshold) body(0, m);
  else parallel_for(m, body);
}

// dX[m,k] += G[m,n] * W[n,k]
inline void matmul_nn_acc(const double* G, const double* W, double* dX,
                          std::int64_t m, std::int64_t n, std::int64_t k) {
  const auto& K = kernels::active();
  auto body = [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t i = r0; i < r1; ++i) {
      const double* gi = G + i * n;
      double* dxi = dX + i * k;
      for (std::int64_t j = 0; j < n; ++j)
        if (gi[j] != 0.0) K.axpy(gi[j], W + j * k, dxi, static_cast<std::size_t>(k));
    }
  };
  if (m * k * n < kParallelFlopThreshold) body(0, m);
  else parallel_for(m, body);
}

// dW[n,k] += G[m,n]^T * X[m,k]; db[n] += column sums of G. Parallel over n.
inline void matmul_tn_acc(const double* G, const double* X, double* dW, double* db,
                          std::int64_t m, std::int64_t n, std::int64_t k) {
  const auto& K = kernels::active();
  auto body = [&](std::int64_t c0, std::int64_t c1) {
    for (std::int64_t j = c0; j < c1; ++j) {
      double* dwj = dW + j * k;
      double bacc = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        const double g = G[i * n + j];
        if (g != 0.0) K.axpy(g, X + i * k, dwj, static_cast<std::size_t>(k));
        bacc += g;
      }
      if (db) db[j] += bacc;
    }
  };
  if (m * k * n < kParallelFlopThreshold) body(0, n);
  else parallel_for(n, body);
}

}  // namespace exg::linalg

#include "exg/nn.hpp"

#include <cmath>

#include "exg/linalg.hpp"

namespace exg::nn {

double ParamSet::grad_norm() const {
  const auto& k = kernels::active();
  double acc = 0.0;
  for (auto* p : items)
    acc += k.sumsq(p->grad.ptr(), static_cast<std::size_t>(p->grad.numel()));
  return std::sqrt(acc);
}

void ParamSet::clip_grad(double max_norm) {
  const double norm = grad_norm();
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  const auto& k = kernels::active();
  for (auto* p : items)
    k.scal(scale, p->grad.ptr(), static_cast<std::size_t>(p->grad.numel()));
}

void sigmoid(const double* x, double* y, std::int64_t n) {
  const auto& k = kernels::active();
  std::vector<double> tmp(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) tmp[i] = -x[i];
  k.vexp(tmp.data(), y, static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + y[i]);
}

void softplus(const double* x, double* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = x[i];
    if (v > 30.0) y[i] = v;
    else if (v < -30.0) y[i] = std::exp(v);
    else y[i] = std::log1p(std::exp(v));
  }
}

void silu(const double* x, double* y, std::int64_t n) {
  sigmoid(x, y, n);
  for (std::int64_t i = 0; i < n; ++i) y[i] *= x[i];
}

void softplus_backward(const double* x, const double* dy, double* dx, std::int64_t n) {
  std::vector<double> s(static_cast<std::size_t>(n));
  sigmoid(x, s.data(), n);
  for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * s[i];
}

void silu_backward(const double* x, const double* dy, double* dx, std::int64_t n) {
  std::vector<double> s(static_cast<std::size_t>(n));
  sigmoid(x, s.data(), n);
  for (std::int64_t i = 0; i < n; ++i)
    dx[i] += dy[i] * s[i] * (1.0 + x[i] * (1.0 - s[i]));
}

void Linear::init(const std::string& name, std::int64_t out_dim, std::int64_t in_dim,
                  bool bias, Rng& rng, double scale) {
  in = in_dim;
  out = out_dim;
  has_bias = bias;
  if (scale < 0.0) scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  W.init(name + ".W", {out_dim, in_dim});
  for (auto& v : W.value.data) v = scale * rng.normal();
  if (bias) b.init(name + ".b", {out_dim});
}

void Linear::forward(const double* X, double* Y, std::int64_t n) const {
  linalg::matmul_nt(X, W.value.ptr(), has_bias ? b.value.ptr() : nullptr, Y, n, in, out);
}

void Linear::backward(const double* X, const double* dY, double* dX, std::int64_t n) {
  linalg::matmul_tn_acc(dY, X, W.grad.ptr(), has_bias ? b.grad.ptr() : nullptr, n, out, in);
  if (dX) linalg::matmul_nn_acc(dY, W.value.ptr(), dX, n, out, in);
}

void LayerNorm::init(const std::string& name, std::int64_t d) {
  dim = d;
  gamma.init(name + ".gamma", {d});
  beta.init(name + ".beta", {d});
  gamma.value.fill(1.0);
}

void LayerNorm::forward(const double* X, double* Y, double* mean, double* rstd,
                        std::int64_t n) const {
  const double dd = static_cast<double>(dim);
  auto body = [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t i = r0; i < r1; ++i) {
      const double* x = X + i * dim;
      double* y = Y + i * dim;
      double mu = 0.0;
      for (std::int64_t j = 0; j < dim; ++j) mu += x[j];
      mu /= dd;
      double var = 0.0;
      for (std::int64_t j = 0; j < dim; ++j) var += (x[j] - mu) * (x[j] - mu);
      const double rs = 1.0 / std::sqrt(var / dd + 1e-6);
      mean[i] = mu;
      rstd[i] = rs;
      const double* g = gamma.value.ptr();
      const double* bt = beta.value.ptr();
      for (std::int64_t j = 0; j < dim; ++j) y[j] = g[j] * (x[j] - mu) * rs + bt[j];
    }
  };
  if (n * dim < (1 << 18)) body(0, n);
  else parallel_for(n, body);
}

void LayerNorm::backward(const double* X, const double* mean, const double* rstd,
                         const double* dY, double* dX, std::int64_t n) {
  const double dd = static_cast<double>(dim);
  const double* g = gamma.value.ptr();
  double* dg = gamma.grad.ptr();
  double* db = beta.grad.ptr();
  for (std::int64_t i = 0; i < n; ++i) {
    const double* x = X + i * dim;
    const double* dy = dY + i * dim;
    for (std::int64_t j = 0; j < dim; ++j) {
      dg[j] += dy[j] * (x[j] - mean[i]) * rstd[i];
      db[j] += dy[j];
    }
  }
  auto body = [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t i = r0; i < r1; ++i) {
      const double* x = X + i * dim;
      const double* dy = dY + i * dim;
      double* dx = dX + i * dim;
      double s1 = 0.0, s2 = 0.0;
      for (std::int64_t j = 0; j < dim; ++j) {
        const double xh = (x[j] - mean[i]) * rstd[i];
        const double gd = dy[j] * g[j];
        s1 += gd;
        s2 += gd * xh;
      }
      s1 /= dd;
      s2 /= dd;
      for (std::int64_t j = 0; j < dim; ++j) {
        const double xh = (x[j] - mean[i]) * rstd[i];
        dx[j] += rstd[i] * (dy[j] * g[j] - s1 - xh * s2);
      }
    }
  };
  if (n * dim < (1 << 18)) body(0, n);
  else parallel_for(n, body);
}

void AdamW::step(ParamSet& ps, double lr) {
  if (m_.size() != ps.items.size()) {
    m_.assign(ps.items.size(), {});
    v_.assign(ps.items.size(), {});
    for (std::size_t i = 0; i < ps.items.size(); ++i) {
      m_[i].assign(static_cast<std::size_t>(ps.items[i]->numel()), 0.0);
      v_[i].assign(static_cast<std::size_t>(ps.items[i]->numel()), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.items.size(); ++i) {
    Param& p = *ps.items[i];
    double* w = p.value.ptr();
    const double* gr = p.grad.ptr();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const std::int64_t n = p.numel();
    for (std::int64_t j = 0; j < n; ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * gr[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * gr[j] * gr[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      w[j] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * w[j]);
    }
  }
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr_start, double lr_end) {
  if (total <= 1) return lr_end;
  const double t = static_cast<double>(step) / static_cast<double>(total - 1);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(M_PI * std::min(1.0, t)));
}

}  // namespace exg::nn

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exg/rng.hpp"
#include "exg/tensor.hpp"

namespace exg::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  void init(std::string n, std::vector<std::int64_t> shape) {
    name = std::move(n);
    value.resize(shape);
    grad.resize(std::move(shape));
  }
  std::int64_t numel() const { return value.numel(); }
};

// Non-owning registry used by the optimizer, checkpoints and tests.
struct ParamSet {
  std::vector<Param*> items;

  void add(Param& p) { items.push_back(&p); }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto* p : items) n += p->numel();
    return n;
  }
  void zero_grad() {
    for (auto* p : items) p->grad.fill(0.0);
  }
  double grad_norm() const;
  void clip_grad(double max_norm);
};

// ---- elementwise activations --------------------------------------------

void sigmoid(const double* x, double* y, std::int64_t n);
void softplus(const double* x, double* y, std::int64_t n);
void silu(const double* x, double* y, std::int64_t n);
// dx += dy * f'(x)
void softplus_backward(const double* x, const double* dy, double* dx, std::int64_t n);
void silu_backward(const double* x, const double* dy, double* dx, std::int64_t n);

// ---- layers ---------------------------------------------------------------

struct Linear {
  Param W;  // [out, in]
  Param b;  // [out]
  bool has_bias = true;
  std::int64_t in = 0, out = 0;

  void init(const std::string& name, std::int64_t out_dim, std::int64_t in_dim,
            bool bias, Rng& rng, double scale = -1.0);
  void forward(const double* X, double* Y, std::int64_t n) const;
  // accumulates into W.grad / b.grad; pass dX = nullptr to skip input grads
  void backward(const double* X, const double* dY, double* dX, std::int64_t n);
  void register_into(ParamSet& ps) {
    ps.add(W);
    if (has_bias) ps.add(b);
  }
};

struct LayerNorm {
  Param gamma, beta;
  std::int64_t dim = 0;

  void init(const std::string& name, std::int64_t d);
  // caches per-row mean and reciprocal std for backward
  void forward(const double* X, double* Y, double* mean, double* rstd,
               std::int64_t n) const;
  void backward(const double* X, const double* mean, const double* rstd,
                const double* dY, double* dX, std::int64_t n);
  void register_into(ParamSet& ps) {
    ps.add(gamma);
    ps.add(beta);
  }
};

// ---- optimizer ------------------------------------------------------------

struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void step(ParamSet& ps, double lr);
  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

 private:
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

// cosine decay from lr_start to lr_end over total steps
double cosine_lr(std::int64_t step, std::int64_t total, double lr_start, double lr_end);

}  // namespace exg::nn

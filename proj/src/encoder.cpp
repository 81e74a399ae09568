#include "exg/encoder.hpp"

#include <cmath>
#include <cstring>

#include "exg/errors.hpp"
#include "exg/linalg.hpp"

namespace exg::enc {

std::int64_t ffn_dim_for_match(std::int64_t d, std::int64_t S) {
  // per-layer counts: bi-ssm = 6d^2 + 6dS + 10d, attention = 4d^2 + 9d + ff(2d+1)
  const double target = static_cast<double>(6 * d * d + 6 * d * S + 10 * d);
  const double fixed = static_cast<double>(4 * d * d + 9 * d);
  const std::int64_t ff = std::llround((target - fixed) / static_cast<double>(2 * d + 1));
  return std::max<std::int64_t>(1, ff);
}

std::int64_t count_parameters(const EncoderConfig& cfg) {
  const std::int64_t d = cfg.model_dim, S = cfg.state_dim;
  if (cfg.backbone == "bi-ssm") {
    return cfg.n_layers * (6 * d * d + 6 * d * S + 10 * d);
  }
  if (cfg.backbone == "attention") {
    const std::int64_t ff = cfg.ffn_dim > 0 ? cfg.ffn_dim : ffn_dim_for_match(d, S);
    return cfg.n_layers * (4 * d * d + 9 * d + ff * (2 * d + 1));
  }
  throw ValidationError("unknown backbone '" + cfg.backbone + "'");
}

void ScanDir::init(const std::string& name, std::int64_t d, std::int64_t S, Rng& rng) {
  dt.init(name + ".dt", d, d, true, rng);
  Bp.init(name + ".B", S, d, false, rng);
  Cp.init(name + ".C", S, d, false, rng);
  gate.init(name + ".gate", d, d, true, rng);
  out.init(name + ".out", d, d, true, rng);
  A_log.init(name + ".A_log", {d, S});
  Dskip.init(name + ".D", {d});

  // state transition stays contractive: A = -exp(A_log) < 0, so the discrete
  // decay exp(A*delta) has magnitude < 1 for any positive step size
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t s = 0; s < S; ++s)
      A_log.value.data[static_cast<std::size_t>(i * S + s)] =
          std::log(static_cast<double>(s + 1));
  // bias the step size into a useful range, roughly logspace(1e-3, 1e-1)
  for (std::int64_t i = 0; i < d; ++i) {
    const double dt0 = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    dt.b.value.data[static_cast<std::size_t>(i)] = std::log(std::expm1(dt0));
  }
  Dskip.value.fill(1.0);
}

void ScanDir::register_into(nn::ParamSet& ps) {
  dt.register_into(ps);
  Bp.register_into(ps);
  Cp.register_into(ps);
  gate.register_into(ps);
  out.register_into(ps);
  ps.add(A_log);
  ps.add(Dskip);
}

void Encoder::init(const EncoderConfig& c) {
  cfg = c;
  if (cfg.backbone == "attention" && cfg.ffn_dim == 0)
    cfg.ffn_dim = ffn_dim_for_match(cfg.model_dim, cfg.state_dim);
  ssm_layers.clear();
  attn_layers.clear();
  Rng rng(cfg.seed);
  const std::int64_t d = cfg.model_dim;

  if (cfg.backbone == "bi-ssm") {
    ssm_layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
      auto& layer = ssm_layers[static_cast<std::size_t>(l)];
      const std::string base = "encoder.layer" + std::to_string(l);
      layer.norm.init(base + ".norm", d);
      layer.fwd.init(base + ".fwd", d, cfg.state_dim, rng);
      layer.bwd.init(base + ".bwd", d, cfg.state_dim, rng);
    }
  } else if (cfg.backbone == "attention") {
    if (d % cfg.n_heads != 0)
      throw ValidationError("model_dim must be divisible by n_heads");
    attn_layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
      auto& layer = attn_layers[static_cast<std::size_t>(l)];
      const std::string base = "encoder.layer" + std::to_string(l);
      layer.norm1.init(base + ".norm1", d);
      layer.norm2.init(base + ".norm2", d);
      layer.q.init(base + ".q", d, d, true, rng);
      layer.k.init(base + ".k", d, d, true, rng);
      layer.v.init(base + ".v", d, d, true, rng);
      layer.o.init(base + ".o", d, d, true, rng);
      layer.ff1.init(base + ".ff1", cfg.ffn_dim, d, true, rng);
      layer.ff2.init(base + ".ff2", d, cfg.ffn_dim, true, rng);
    }
  } else {
    throw ValidationError("unknown backbone '" + cfg.backbone + "'");
  }
}

void Encoder::register_into(nn::ParamSet& ps) {
  for (auto& l : ssm_layers) {
    l.norm.register_into(ps);
    l.fwd.register_into(ps);
    l.bwd.register_into(ps);
  }
  for (auto& l : attn_layers) {
    l.norm1.register_into(ps);
    l.norm2.register_into(ps);
    l.q.register_into(ps);
    l.k.register_into(ps);
    l.v.register_into(ps);
    l.o.register_into(ps);
    l.ff1.register_into(ps);
    l.ff2.register_into(ps);
  }
}

namespace {

// ---- selective scan ---------------------------------------------------------

// One scan direction. reverse=false walks t = 0..N-1, reverse=true walks
// t = N-1..0. y = out((scan_readout + D*xn) .* silu(gate(xn))).
void dir_forward(const ScanDir& dir, const double* xn, std::int64_t N,
                 std::int64_t d, std::int64_t S, bool reverse,
                 Trace::DirTrace& tr, double* y) {
  const auto& K = kernels::active();
  tr.pre_dt.resize({N, d});
  tr.delta.resize({N, d});
  tr.B.resize({N, S});
  tr.C.resize({N, S});
  tr.pre_g.resize({N, d});
  tr.g.resize({N, d});
  tr.decay.resize({N, d * S});
  tr.h.resize({N, d * S});
  tr.ys.resize({N, d});
  tr.yg.resize({N, d});

  dir.dt.forward(xn, tr.pre_dt.ptr(), N);
  nn::softplus(tr.pre_dt.ptr(), tr.delta.ptr(), N * d);
  dir.Bp.forward(xn, tr.B.ptr(), N);
  dir.Cp.forward(xn, tr.C.ptr(), N);
  dir.gate.forward(xn, tr.pre_g.ptr(), N);
  nn::silu(tr.pre_g.ptr(), tr.g.ptr(), N * d);

  std::vector<double> A(static_cast<std::size_t>(d * S));
  K.vexp(dir.A_log.value.ptr(), A.data(), static_cast<std::size_t>(d * S));
  for (auto& a : A) a = -a;

  std::vector<double> h(static_cast<std::size_t>(d * S), 0.0);
  std::vector<double> args(static_cast<std::size_t>(d * S));
  const double* Dv = dir.Dskip.value.ptr();

  for (std::int64_t step = 0; step < N; ++step) {
    const std::int64_t t = reverse ? (N - 1 - step) : step;
    const double* del = tr.delta.ptr() + t * d;
    const double* xt = xn + t * d;
    const double* Bt = tr.B.ptr() + t * S;
    const double* Ct = tr.C.ptr() + t * S;
    double* decay_t = tr.decay.ptr() + t * d * S;
    double* ys_t = tr.ys.ptr() + t * d;

    for (std::int64_t i = 0; i < d; ++i) {
      const double dl = del[i];
      const double* Ai = A.data() + i * S;
      double* argi = args.data() + i * S;
      for (std::int64_t s = 0; s < S; ++s) argi[s] = Ai[s] * dl;
    }
    K.vexp(args.data(), decay_t, static_cast<std::size_t>(d * S));
    for (std::int64_t i = 0; i < d; ++i) {
      double* hi = h.data() + i * S;
      K.decay_axpy(decay_t + i * S, del[i] * xt[i], Bt, hi,
                   static_cast<std::size_t>(S));
      ys_t[i] = K.dot(Ct, hi, static_cast<std::size_t>(S)) + Dv[i] * xt[i];
    }
    std::memcpy(tr.h.ptr() + t * d * S, h.data(),
                static_cast<std::size_t>(d * S) * sizeof(double));
  }

  K.vmul(tr.ys.ptr(), tr.g.ptr(), tr.yg.ptr(), static_cast<std::size_t>(N * d));
  dir.out.forward(tr.yg.ptr(), y, N);
}

// Backward through one direction; adds input gradients into dxn.
void dir_backward(ScanDir& dir, const double* xn, std::int64_t N, std::int64_t d,
                  std::int64_t S, bool reverse, const Trace::DirTrace& tr,
                  const double* dY, double* dxn) {
  const auto& K = kernels::active();
  const std::size_t nd = static_cast<std::size_t>(N * d);

  std::vector<double> dyg(nd, 0.0);
  dir.out.backward(tr.yg.ptr(), dY, dyg.data(), N);

  std::vector<double> dys(nd), dg(nd);
  K.vmul(dyg.data(), tr.g.ptr(), dys.data(), nd);
  K.vmul(dyg.data(), tr.ys.ptr(), dg.data(), nd);

  std::vector<double> dpre_g(nd, 0.0);
  nn::silu_backward(tr.pre_g.ptr(), dg.data(), dpre_g.data(), N * d);
  dir.gate.backward(xn, dpre_g.data(), dxn, N);

  std::vector<double> A(static_cast<std::size_t>(d * S));
  K.vexp(dir.A_log.value.ptr(), A.data(), static_cast<std::size_t>(d * S));
  for (auto& a : A) a = -a;

  std::vector<double> gh(static_cast<std::size_t>(d * S), 0.0);
  std::vector<double> dA(static_cast<std::size_t>(d * S), 0.0);
  std::vector<double> ddelta(nd, 0.0);
  std::vector<double> dB(static_cast<std::size_t>(N * S), 0.0);
  std::vector<double> dC(static_cast<std::size_t>(N * S), 0.0);
  const double* Dv = dir.Dskip.value.ptr();
  double* dD = dir.Dskip.grad.ptr();

  for (std::int64_t step = N - 1; step >= 0; --step) {
    const std::int64_t t = reverse ? (N - 1 - step) : step;
    const std::int64_t t_prev = reverse ? (t + 1) : (t - 1);
    const bool first = (step == 0);

    const double* del = tr.delta.ptr() + t * d;
    const double* xt = xn + t * d;
    const double* Bt = tr.B.ptr() + t * S;
    const double* Ct = tr.C.ptr() + t * S;
    const double* decay_t = tr.decay.ptr() + t * d * S;
    const double* h_t = tr.h.ptr() + t * d * S;
    const double* h_prev = first ? nullptr : tr.h.ptr() + t_prev * d * S;
    const double* dys_t = dys.data() + t * d;
    double* dB_t = dB.data() + t * S;
    double* dC_t = dC.data() + t * S;
    double* ddel_t = ddelta.data() + t * d;

    for (std::int64_t i = 0; i < d; ++i) {
      const double dy = dys_t[i];
      const double* hi = h_t + i * S;
      const double* hp = h_prev ? h_prev + i * S : nullptr;
      const double* dec = decay_t + i * S;
      const double* Ai = A.data() + i * S;
      double* ghi = gh.data() + i * S;
      double* dAi = dA.data() + i * S;

      // readout: ys[t,i] = C_t . h_t[i,:] + D[i] * xn[t,i]
      dD[i] += xt[i] * dy;
      double dxn_i = Dv[i] * dy;

      const double del_i = del[i];
      const double inc_i = del_i * xt[i];
      double ddel = 0.0;
      for (std::int64_t s = 0; s < S; ++s) {
        const double ghv = ghi[s] + Ct[s] * dy;  // full dL/dh_t[i,s]
        dC_t[s] += hi[s] * dy;
        const double hprev = hp ? hp[s] : 0.0;
        const double ddecay = ghv * hprev;
        dAi[s] += ddecay * dec[s] * del_i;
        ddel += ddecay * dec[s] * Ai[s];  // decay path
        ddel += ghv * Bt[s] * xt[i];      // increment path
        dB_t[s] += ghv * inc_i;
        dxn_i += ghv * del_i * Bt[s];
        ghi[s] = ghv * dec[s];  // propagate to the previous scan step
      }
      ddel_t[i] = ddel;
      dxn[t * d + i] += dxn_i;
    }
  }

  // A = -exp(A_log)  =>  dA_log = dA * A
  double* dAlog = dir.A_log.grad.ptr();
  for (std::int64_t i = 0; i < d * S; ++i)
    dAlog[i] += dA[static_cast<std::size_t>(i)] * A[static_cast<std::size_t>(i)];

  std::vector<double> dpre_dt(nd, 0.0);
  nn::softplus_backward(tr.pre_dt.ptr(), ddelta.data(), dpre_dt.data(), N * d);
  dir.dt.backward(xn, dpre_dt.data(), dxn, N);
  dir.Bp.backward(xn, dB.data(), dxn, N);
  dir.Cp.backward(xn, dC.data(), dxn, N);
}

// ---- attention ---------------------------------------------------------------

void pack_head(const double* X, double* out, std::int64_t N, std::int64_t d,
               std::int64_t h, std::int64_t dh) {
  for (std::int64_t i = 0; i < N; ++i)
    std::memcpy(out + i * dh, X + i * d + h * dh,
                static_cast<std::size_t>(dh) * sizeof(double));
}

void unpack_head_add(const double* packed, double* X, std::int64_t N, std::int64_t d,
                     std::int64_t h, std::int64_t dh) {
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t j = 0; j < dh; ++j) X[i * d + h * dh + j] += packed[i * dh + j];
}

void attn_forward(const AttnLayer& layer, std::int64_t n_heads, const double* x,
                  double* out, std::int64_t N, std::int64_t d,
                  Trace::LayerTrace& lt) {
  const auto& K = kernels::active();
  const std::int64_t H = n_heads, dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  lt.xn.resize({N, d});
  lt.mean.resize({N});
  lt.rstd.resize({N});
  layer.norm1.forward(x, lt.xn.ptr(), lt.mean.ptr(), lt.rstd.ptr(), N);

  lt.Q.resize({N, d});
  lt.K.resize({N, d});
  lt.V.resize({N, d});
  layer.q.forward(lt.xn.ptr(), lt.Q.ptr(), N);
  layer.k.forward(lt.xn.ptr(), lt.K.ptr(), N);
  layer.v.forward(lt.xn.ptr(), lt.V.ptr(), N);

  lt.P.resize({H, N, N});
  lt.ctx.resize({N, d});
  lt.ctx.fill(0.0);
  std::vector<double> qh(static_cast<std::size_t>(N * dh)),
      kh(static_cast<std::size_t>(N * dh)), vh(static_cast<std::size_t>(N * dh)),
      ch(static_cast<std::size_t>(N * dh));
  for (std::int64_t h = 0; h < H; ++h) {
    pack_head(lt.Q.ptr(), qh.data(), N, d, h, dh);
    pack_head(lt.K.ptr(), kh.data(), N, d, h, dh);
    pack_head(lt.V.ptr(), vh.data(), N, d, h, dh);
    double* P = lt.P.ptr() + h * N * N;
    parallel_for(N, [&](std::int64_t r0, std::int64_t r1) {
      for (std::int64_t i = r0; i < r1; ++i) {
        double* row = P + i * N;
        double mx = -1e300;
        for (std::int64_t j = 0; j < N; ++j) {
          row[j] = scale * K.dot(qh.data() + i * dh, kh.data() + j * dh,
                                 static_cast<std::size_t>(dh));
          mx = std::max(mx, row[j]);
        }
        for (std::int64_t j = 0; j < N; ++j) row[j] -= mx;
        K.vexp(row, row, static_cast<std::size_t>(N));
        const double z = K.sum(row, static_cast<std::size_t>(N));
        K.scal(1.0 / z, row, static_cast<std::size_t>(N));
      }
    });
    // ctx_h = P * V_h
    parallel_for(N, [&](std::int64_t r0, std::int64_t r1) {
      for (std::int64_t i = r0; i < r1; ++i) {
        double* ci = ch.data() + i * dh;
        std::memset(ci, 0, static_cast<std::size_t>(dh) * sizeof(double));
        const double* row = P + i * N;
        for (std::int64_t j = 0; j < N; ++j)
          K.axpy(row[j], vh.data() + j * dh, ci, static_cast<std::size_t>(dh));
      }
    });
    unpack_head_add(ch.data(), lt.ctx.ptr(), N, d, h, dh);
  }

  lt.x2.resize({N, d});
  layer.o.forward(lt.ctx.ptr(), lt.x2.ptr(), N);
  K.vadd(x, lt.x2.ptr(), static_cast<std::size_t>(N * d));  // x2 = x + attn

  lt.xn2.resize({N, d});
  lt.mean2.resize({N});
  lt.rstd2.resize({N});
  layer.norm2.forward(lt.x2.ptr(), lt.xn2.ptr(), lt.mean2.ptr(), lt.rstd2.ptr(), N);
  const std::int64_t ff = layer.ff1.out;
  lt.f1.resize({N, ff});
  lt.fa.resize({N, ff});
  layer.ff1.forward(lt.xn2.ptr(), lt.f1.ptr(), N);
  nn::silu(lt.f1.ptr(), lt.fa.ptr(), N * ff);
  layer.ff2.forward(lt.fa.ptr(), out, N);
  K.vadd(lt.x2.ptr(), out, static_cast<std::size_t>(N * d));  // out = x2 + mlp
}

void attn_backward(AttnLayer& layer, std::int64_t n_heads, const double* x,
                   const Trace::LayerTrace& lt, const double* dOut, double* dX,
                   std::int64_t N, std::int64_t d) {
  const auto& K = kernels::active();
  const std::int64_t H = n_heads, dh = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::int64_t ff = layer.ff1.out;

  // mlp branch
  std::vector<double> dfa(static_cast<std::size_t>(N * ff), 0.0);
  layer.ff2.backward(lt.fa.ptr(), dOut, dfa.data(), N);
  std::vector<double> df1(static_cast<std::size_t>(N * ff), 0.0);
  nn::silu_backward(lt.f1.ptr(), dfa.data(), df1.data(), N * ff);
  std::vector<double> dxn2(static_cast<std::size_t>(N * d), 0.0);
  layer.ff1.backward(lt.xn2.ptr(), df1.data(), dxn2.data(), N);

  std::vector<double> dx2(dOut, dOut + N * d);  // residual path
  layer.norm2.backward(lt.x2.ptr(), lt.mean2.ptr(), lt.rstd2.ptr(), dxn2.data(),
                       dx2.data(), N);

  // attention branch
  std::vector<double> dctx(static_cast<std::size_t>(N * d), 0.0);
  layer.o.backward(lt.ctx.ptr(), dx2.data(), dctx.data(), N);

  std::vector<double> dQ(static_cast<std::size_t>(N * d), 0.0),
      dK(static_cast<std::size_t>(N * d), 0.0), dV(static_cast<std::size_t>(N * d), 0.0);
  std::vector<double> qh(static_cast<std::size_t>(N * dh)),
      kh(static_cast<std::size_t>(N * dh)), vh(static_cast<std::size_t>(N * dh)),
      dch(static_cast<std::size_t>(N * dh)), dqh(static_cast<std::size_t>(N * dh)),
      dkh(static_cast<std::size_t>(N * dh)), dvh(static_cast<std::size_t>(N * dh)),
      dP(static_cast<std::size_t>(N * N));
  for (std::int64_t h = 0; h < H; ++h) {
    pack_head(lt.Q.ptr(), qh.data(), N, d, h, dh);
    pack_head(lt.K.ptr(), kh.data(), N, d, h, dh);
    pack_head(lt.V.ptr(), vh.data(), N, d, h, dh);
    pack_head(dctx.data(), dch.data(), N, d, h, dh);
    const double* P = lt.P.ptr() + h * N * N;
    std::fill(dqh.begin(), dqh.end(), 0.0);
    std::fill(dkh.begin(), dkh.end(), 0.0);
    std::fill(dvh.begin(), dvh.end(), 0.0);

    // dP = dctx * V^T, softmax backward in place
    parallel_for(N, [&](std::int64_t r0, std::int64_t r1) {
      for (std::int64_t i = r0; i < r1; ++i) {
        double* dpi = dP.data() + i * N;
        const double* pi = P + i * N;
        for (std::int64_t j = 0; j < N; ++j)
          dpi[j] = K.dot(dch.data() + i * dh, vh.data() + j * dh,
                         static_cast<std::size_t>(dh));
        const double dot_pp = K.dot(dpi, pi, static_cast<std::size_t>(N));
        for (std::int64_t j = 0; j < N; ++j) dpi[j] = pi[j] * (dpi[j] - dot_pp);
        // dQ_i = scale * sum_j ds_ij K_j
        double* dqi = dqh.data() + i * dh;
        for (std::int64_t j = 0; j < N; ++j)
          K.axpy(scale * dpi[j], kh.data() + j * dh, dqi,
                 static_cast<std::size_t>(dh));
      }
    });
    // dV_j = sum_i P_ij dctx_i ; dK_j = scale * sum_i ds_ij Q_i (serial: shared rows)
    for (std::int64_t i = 0; i < N; ++i) {
      const double* pi = P + i * N;
      const double* dpi = dP.data() + i * N;
      for (std::int64_t j = 0; j < N; ++j) {
        if (pi[j] != 0.0)
          K.axpy(pi[j], dch.data() + i * dh, dvh.data() + j * dh,
                 static_cast<std::size_t>(dh));
        if (dpi[j] != 0.0)
          K.axpy(scale * dpi[j], qh.data() + i * dh, dkh.data() + j * dh,
                 static_cast<std::size_t>(dh));
      }
    }
    unpack_head_add(dqh.data(), dQ.data(), N, d, h, dh);
    unpack_head_add(dkh.data(), dK.data(), N, d, h, dh);
    unpack_head_add(dvh.data(), dV.data(), N, d, h, dh);
  }

  std::vector<double> dxn1(static_cast<std::size_t>(N * d), 0.0);
  layer.q.backward(lt.xn.ptr(), dQ.data(), dxn1.data(), N);
  layer.k.backward(lt.xn.ptr(), dK.data(), dxn1.data(), N);
  layer.v.backward(lt.xn.ptr(), dV.data(), dxn1.data(), N);

  // residual into dX: dx2 flows straight through, plus the norm1 path
  K.vadd(dx2.data(), dX, static_cast<std::size_t>(N * d));
  layer.norm1.backward(x, lt.mean.ptr(), lt.rstd.ptr(), dxn1.data(), dX, N);
}

}  // namespace

void Encoder::forward(const double* X, double* Y, std::int64_t N, Trace* trace) const {
  const std::int64_t d = cfg.model_dim;
  Trace local;
  Trace& tr = trace ? *trace : local;
  tr.N = N;
  tr.layer_in.resize(static_cast<std::size_t>(cfg.n_layers));
  tr.layers.resize(static_cast<std::size_t>(cfg.n_layers));

  Tensor cur({N, d});
  std::memcpy(cur.ptr(), X, static_cast<std::size_t>(N * d) * sizeof(double));

  const auto& K = kernels::active();
  if (cfg.backbone == "bi-ssm") {
    Tensor yf({N, d}), yb({N, d});
    for (std::size_t l = 0; l < ssm_layers.size(); ++l) {
      const auto& layer = ssm_layers[l];
      auto& lt = tr.layers[l];
      tr.layer_in[l] = cur;
      lt.xn.resize({N, d});
      lt.mean.resize({N});
      lt.rstd.resize({N});
      layer.norm.forward(cur.ptr(), lt.xn.ptr(), lt.mean.ptr(), lt.rstd.ptr(), N);
      dir_forward(layer.fwd, lt.xn.ptr(), N, d, cfg.state_dim, false, lt.fwd, yf.ptr());
      dir_forward(layer.bwd, lt.xn.ptr(), N, d, cfg.state_dim, true, lt.bwd, yb.ptr());
      K.vadd(yf.ptr(), cur.ptr(), static_cast<std::size_t>(N * d));
      K.vadd(yb.ptr(), cur.ptr(), static_cast<std::size_t>(N * d));
    }
  } else {
    Tensor next({N, d});
    for (std::size_t l = 0; l < attn_layers.size(); ++l) {
      tr.layer_in[l] = cur;
      attn_forward(attn_layers[l], cfg.n_heads, cur.ptr(), next.ptr(), N, d,
                   tr.layers[l]);
      std::swap(cur, next);
    }
  }
  std::memcpy(Y, cur.ptr(), static_cast<std::size_t>(N * d) * sizeof(double));
}

void Encoder::backward(const Trace& trace, const double* dY, double* dX) {
  const std::int64_t N = trace.N, d = cfg.model_dim;
  std::vector<double> dcur(dY, dY + N * d);
  std::vector<double> dprev(static_cast<std::size_t>(N * d));

  if (cfg.backbone == "bi-ssm") {
    for (std::int64_t l = cfg.n_layers - 1; l >= 0; --l) {
      auto& layer = ssm_layers[static_cast<std::size_t>(l)];
      const auto& lt = trace.layers[static_cast<std::size_t>(l)];
      const double* x_in = trace.layer_in[static_cast<std::size_t>(l)].ptr();
      std::vector<double> dxn(static_cast<std::size_t>(N * d), 0.0);
      dir_backward(layer.fwd, lt.xn.ptr(), N, d, cfg.state_dim, false, lt.fwd,
                   dcur.data(), dxn.data());
      dir_backward(layer.bwd, lt.xn.ptr(), N, d, cfg.state_dim, true, lt.bwd,
                   dcur.data(), dxn.data());
      // residual: dL/dx_in = dcur + norm-backward(dxn)
      layer.norm.backward(x_in, lt.mean.ptr(), lt.rstd.ptr(), dxn.data(),
                          dcur.data(), N);
    }
  } else {
    for (std::int64_t l = cfg.n_layers - 1; l >= 0; --l) {
      auto& layer = attn_layers[static_cast<std::size_t>(l)];
      const auto& lt = trace.layers[static_cast<std::size_t>(l)];
      const double* x_in = trace.layer_in[static_cast<std::size_t>(l)].ptr();
      std::fill(dprev.begin(), dprev.end(), 0.0);
      attn_backward(layer, cfg.n_heads, x_in, lt, dcur.data(), dprev.data(), N, d);
      std::swap(dcur, dprev);
    }
  }
  kernels::active().vadd(dcur.data(), dX, static_cast<std::size_t>(N * d));
}

token::TokenSequence Encoder::encode(const token::TokenSequence& tokens,
                                     Trace* trace) const {
  if (tokens.d != cfg.model_dim)
    throw ValidationError("encode: token dim " + std::to_string(tokens.d) +
                          " != model dim " + std::to_string(cfg.model_dim));
  token::TokenSequence out = tokens;
  forward(tokens.embeddings.ptr(), out.embeddings.ptr(), tokens.n_tokens(), trace);
  return out;
}

}  // namespace exg::enc

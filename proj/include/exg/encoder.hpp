#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exg/nn.hpp"
#include "exg/tokenize.hpp"

namespace exg::enc {

struct EncoderConfig {
  std::string backbone = "bi-ssm";  // "bi-ssm" | "attention"
  std::int64_t n_layers = 8;
  std::int64_t model_dim = 64;
  std::int64_t state_dim = 16;
  std::int64_t n_heads = 4;   // attention only
  std::int64_t ffn_dim = 0;   // attention only; 0 = parameter-matched to bi-ssm
  std::uint64_t seed = 1;
};

// feed-forward width that matches the attention layer's parameter count to
// the bi-ssm layer at the same (d, state_dim)
std::int64_t ffn_dim_for_match(std::int64_t d, std::int64_t state_dim);

std::int64_t count_parameters(const EncoderConfig& cfg);

// One selective-scan direction: input-dependent step size and gate, diagonal
// state transition, per-channel skip.
struct ScanDir {
  nn::Linear dt;    // [d, d]
  nn::Linear Bp;    // [S, d], no bias
  nn::Linear Cp;    // [S, d], no bias
  nn::Linear gate;  // [d, d]
  nn::Linear out;   // [d, d]
  nn::Param A_log;  // [d, S]
  nn::Param Dskip;  // [d]

  void init(const std::string& name, std::int64_t d, std::int64_t S, Rng& rng);
  void register_into(nn::ParamSet& ps);
};

struct SsmLayer {
  nn::LayerNorm norm;
  ScanDir fwd, bwd;
};

struct AttnLayer {
  nn::LayerNorm norm1, norm2;
  nn::Linear q, k, v, o, ff1, ff2;
};

// Per-sequence activation cache for backward.
struct Trace {
  std::int64_t N = 0;
  std::vector<Tensor> layer_in;  // input of each layer [N, d]
  struct DirTrace {
    Tensor pre_dt, delta;  // [N, d]
    Tensor B, C;           // [N, S]
    Tensor pre_g, g;       // [N, d]
    Tensor decay, h;       // [N, d*S]
    Tensor ys, yg;         // [N, d]
  };
  struct LayerTrace {
    Tensor xn, mean, rstd;  // [N, d], [N], [N]
    DirTrace fwd, bwd;
    // attention
    Tensor Q, K, V, P, ctx, x2, xn2, mean2, rstd2, f1, fa;
  };
  std::vector<LayerTrace> layers;
};

class Encoder {
 public:
  EncoderConfig cfg;
  std::vector<SsmLayer> ssm_layers;
  std::vector<AttnLayer> attn_layers;

  void init(const EncoderConfig& c);
  void register_into(nn::ParamSet& ps);

  // X, Y: [N, model_dim]. trace may be null for inference.
  void forward(const double* X, double* Y, std::int64_t N, Trace* trace) const;
  // dY -> dX (adds into dX); accumulates parameter gradients. Requires the
  // trace of the matching forward call.
  void backward(const Trace& trace, const double* dY, double* dX);

  token::TokenSequence encode(const token::TokenSequence& tokens,
                              Trace* trace = nullptr) const;
};

}  // namespace exg::enc

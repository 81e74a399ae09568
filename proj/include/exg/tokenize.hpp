#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "exg/nn.hpp"
#include "exg/sigproc.hpp"

namespace exg::token {

// Non-overlapping patches of a band-decomposed window, [F, C, L, w].
struct PatchGrid {
  std::int64_t F = 0, C = 0, L = 0, w = 0;
  double fs = 0.0;
  std::vector<double> data;

  std::int64_t n_tokens() const { return F * C * L; }
  double* patch(std::int64_t f, std::int64_t c, std::int64_t l) {
    return data.data() + ((f * C + c) * L + l) * w;
  }
  const double* patch(std::int64_t f, std::int64_t c, std::int64_t l) const {
    return data.data() + ((f * C + c) * L + l) * w;
  }
  // sequence position of (f, c, l): f outermost, l innermost
  std::int64_t flatten(std::int64_t f, std::int64_t c, std::int64_t l) const {
    return (f * C + c) * L + l;
  }
  std::array<std::int64_t, 3> unflatten(std::int64_t n) const {
    return {n / (C * L), (n / L) % C, n % L};
  }
};

PatchGrid segment(const sigproc::BandStack& win, std::int64_t patch_samples);

struct TokenizerConfig {
  std::int64_t patch_samples = 100;  // 0.5 s at 200 Hz
  std::int64_t embed_dim = 64;
  std::int64_t F = 12, C = 4, L = 8;
};

// One shared linear projection plus additive per-axis positional tables and
// the learnable replacement patch used for masking.
struct TokenizerParams {
  TokenizerConfig cfg;
  nn::Linear proj;      // [d, w]
  nn::Param pos_f;      // [F, d]
  nn::Param pos_c;      // [C, d]
  nn::Param pos_l;      // [L, d]
  nn::Param mask_patch; // [w]

  void init(const TokenizerConfig& c, std::uint64_t seed);
  void register_into(nn::ParamSet& ps) {
    proj.register_into(ps);
    ps.add(pos_f);
    ps.add(pos_c);
    ps.add(pos_l);
    ps.add(mask_patch);
  }
};

struct TokenSequence {
  std::int64_t F = 0, C = 0, L = 0, d = 0;
  Tensor embeddings;  // [N, d]
  std::int64_t n_tokens() const { return F * C * L; }
  std::int64_t flatten(std::int64_t f, std::int64_t c, std::int64_t l) const {
    return (f * C + c) * L + l;
  }
  std::array<std::int64_t, 3> unflatten(std::int64_t n) const {
    return {n / (C * L), (n / L) % C, n % L};
  }
};

TokenSequence embed(const PatchGrid& grid, const TokenizerParams& params);

// Accumulates parameter gradients for dE [N, d]. `mask` (optional, one flag
// per token) routes patch gradients of masked positions into mask_patch.
void embed_backward(const PatchGrid& grid, TokenizerParams& params,
                    const double* dE, const std::vector<std::uint8_t>* mask);

struct MaskSpec {
  double ratio = 0.5;
  enum class Mode { kUniformToken, kAxisStructured };
  Mode mode = Mode::kUniformToken;
  std::uint64_t seed = 0;
};

struct MaskResult {
  PatchGrid corrupted;
  std::vector<std::uint8_t> mask;  // one flag per token, (f,c,l) order
  std::int64_t n_masked = 0;
};

MaskResult apply_mask(const PatchGrid& grid, const MaskSpec& spec,
                      std::span<const double> mask_patch);

}  // namespace exg::token

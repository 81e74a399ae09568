#include "exg/tokenize.hpp"

#include <cmath>
#include <cstring>

#include "exg/errors.hpp"
#include "exg/linalg.hpp"

namespace exg::token {

PatchGrid segment(const sigproc::BandStack& win, std::int64_t patch_samples) {
  if (patch_samples <= 0 || win.samples % patch_samples != 0)
    throw ValidationError("segment: window length " + std::to_string(win.samples) +
                          " not divisible by patch size " +
                          std::to_string(patch_samples));
  PatchGrid grid;
  grid.F = win.n_bands;
  grid.C = win.channels;
  grid.L = win.samples / patch_samples;
  grid.w = patch_samples;
  grid.fs = win.fs;
  grid.data.resize(static_cast<std::size_t>(grid.n_tokens() * grid.w));
  for (std::int64_t f = 0; f < grid.F; ++f)
    for (std::int64_t c = 0; c < grid.C; ++c) {
      const double* src = win.slice(f, c);
      for (std::int64_t l = 0; l < grid.L; ++l)
        std::memcpy(grid.patch(f, c, l), src + l * grid.w,
                    static_cast<std::size_t>(grid.w) * sizeof(double));
    }
  return grid;
}

void TokenizerParams::init(const TokenizerConfig& c, std::uint64_t seed) {
  cfg = c;
  Rng rng(seed);
  proj.init("tokenizer.proj", c.embed_dim, c.patch_samples, true, rng);
  pos_f.init("tokenizer.pos_f", {c.F, c.embed_dim});
  pos_c.init("tokenizer.pos_c", {c.C, c.embed_dim});
  pos_l.init("tokenizer.pos_l", {c.L, c.embed_dim});
  mask_patch.init("tokenizer.mask_patch", {c.patch_samples});
  const double pos_scale = 0.02;
  for (auto& v : pos_f.value.data) v = pos_scale * rng.normal();
  for (auto& v : pos_c.value.data) v = pos_scale * rng.normal();
  for (auto& v : pos_l.value.data) v = pos_scale * rng.normal();
  for (auto& v : mask_patch.value.data) v = pos_scale * rng.normal();
}

TokenSequence embed(const PatchGrid& grid, const TokenizerParams& params) {
  if (grid.w != params.cfg.patch_samples)
    throw ValidationError("embed: patch width " + std::to_string(grid.w) +
                          " does not match tokenizer (" +
                          std::to_string(params.cfg.patch_samples) + ")");
  if (grid.F != params.cfg.F || grid.C != params.cfg.C || grid.L != params.cfg.L)
    throw ValidationError("embed: grid shape does not match tokenizer config");

  TokenSequence seq;
  seq.F = grid.F;
  seq.C = grid.C;
  seq.L = grid.L;
  seq.d = params.cfg.embed_dim;
  const std::int64_t N = grid.n_tokens();
  seq.embeddings.resize({N, seq.d});

  // patches are already stored in (f, c, l) order, so one projection over the
  // whole grid keeps the sequence order
  params.proj.forward(grid.data.data(), seq.embeddings.ptr(), N);

  const auto& k = kernels::active();
  const std::int64_t d = seq.d;
  for (std::int64_t f = 0; f < grid.F; ++f)
    for (std::int64_t c = 0; c < grid.C; ++c)
      for (std::int64_t l = 0; l < grid.L; ++l) {
        double* e = seq.embeddings.ptr() + grid.flatten(f, c, l) * d;
        k.vadd(params.pos_f.value.ptr() + f * d, e, static_cast<std::size_t>(d));
        k.vadd(params.pos_c.value.ptr() + c * d, e, static_cast<std::size_t>(d));
        k.vadd(params.pos_l.value.ptr() + l * d, e, static_cast<std::size_t>(d));
      }
  return seq;
}

void embed_backward(const PatchGrid& grid, TokenizerParams& params,
                    const double* dE, const std::vector<std::uint8_t>* mask) {
  const std::int64_t N = grid.n_tokens();
  const std::int64_t d = params.cfg.embed_dim;
  const auto& k = kernels::active();

  // positional tables
  for (std::int64_t f = 0; f < grid.F; ++f)
    for (std::int64_t c = 0; c < grid.C; ++c)
      for (std::int64_t l = 0; l < grid.L; ++l) {
        const double* de = dE + grid.flatten(f, c, l) * d;
        k.vadd(de, params.pos_f.grad.ptr() + f * d, static_cast<std::size_t>(d));
        k.vadd(de, params.pos_c.grad.ptr() + c * d, static_cast<std::size_t>(d));
        k.vadd(de, params.pos_l.grad.ptr() + l * d, static_cast<std::size_t>(d));
      }

  if (!mask) {
    params.proj.backward(grid.data.data(), dE, nullptr, N);
    return;
  }

  // with masking, the replaced patches are mask_patch: route their input
  // gradient there
  std::vector<double> dpatch(grid.data.size(), 0.0);
  params.proj.backward(grid.data.data(), dE, dpatch.data(), N);
  for (std::int64_t t = 0; t < N; ++t)
    if ((*mask)[static_cast<std::size_t>(t)])
      k.vadd(dpatch.data() + t * grid.w, params.mask_patch.grad.ptr(),
             static_cast<std::size_t>(grid.w));
}

MaskResult apply_mask(const PatchGrid& grid, const MaskSpec& spec,
                      std::span<const double> mask_patch) {
  if (spec.ratio < 0.0 || spec.ratio > 1.0)
    throw ValidationError("apply_mask: ratio outside [0, 1]");
  const std::int64_t N = grid.n_tokens();
  const std::int64_t target = std::llround(spec.ratio * static_cast<double>(N));

  MaskResult res;
  res.corrupted = grid;
  res.mask.assign(static_cast<std::size_t>(N), 0);
  Rng rng(spec.seed);

  if (spec.mode == MaskSpec::Mode::kUniformToken) {
    // partial Fisher-Yates over token indices
    std::vector<std::int64_t> idx(static_cast<std::size_t>(N));
    for (std::int64_t i = 0; i < N; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < target; ++i) {
      const std::int64_t j =
          i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(N - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      res.mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
    }
  } else {
    // whole (f), (c) or (l) slices until the target is reached
    std::int64_t masked = 0;
    while (masked < target) {
      const int axis = static_cast<int>(rng.below(3));
      std::int64_t f0 = -1, c0 = -1, l0 = -1;
      if (axis == 0) f0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(grid.F)));
      else if (axis == 1) c0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(grid.C)));
      else l0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(grid.L)));
      for (std::int64_t f = 0; f < grid.F; ++f)
        for (std::int64_t c = 0; c < grid.C; ++c)
          for (std::int64_t l = 0; l < grid.L; ++l) {
            if ((axis == 0 && f != f0) || (axis == 1 && c != c0) || (axis == 2 && l != l0))
              continue;
            auto& flag = res.mask[static_cast<std::size_t>(grid.flatten(f, c, l))];
            if (!flag) {
              flag = 1;
              ++masked;
            }
          }
    }
  }

  std::int64_t count = 0;
  for (std::int64_t t = 0; t < N; ++t) {
    if (!res.mask[static_cast<std::size_t>(t)]) continue;
    ++count;
    double* p = res.corrupted.data.data() + t * grid.w;
    if (static_cast<std::int64_t>(mask_patch.size()) == grid.w)
      std::memcpy(p, mask_patch.data(), static_cast<std::size_t>(grid.w) * sizeof(double));
    else
      std::memset(p, 0, static_cast<std::size_t>(grid.w) * sizeof(double));
  }
  res.n_masked = count;
  return res;
}

}  // namespace exg::token

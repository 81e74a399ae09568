#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "exg/errors.hpp"
#include "exg/tokenize.hpp"

using namespace exg;
using token::MaskSpec;

namespace {

sigproc::BandStack make_window(std::int64_t F, std::int64_t C, std::int64_t T,
                               std::uint64_t seed = 1) {
  sigproc::BandStack win;
  win.n_bands = F;
  win.channels = C;
  win.samples = T;
  win.fs = 200.0;
  win.data.resize(static_cast<std::size_t>(F * C * T));
  Rng rng(seed);
  for (auto& v : win.data) v = rng.normal();
  return win;
}

}  // namespace

TEST_CASE("segment: shapes, round trip, divisibility guard") {
  auto win = make_window(12, 4, 800);
  auto grid = token::segment(win, 100);
  CHECK(grid.F == 12);
  CHECK(grid.C == 4);
  CHECK(grid.L == 8);
  CHECK(grid.w == 100);
  CHECK(grid.n_tokens() == 384);

  // concatenating patches along l reproduces the window exactly
  for (std::int64_t f = 0; f < 12; ++f)
    for (std::int64_t c = 0; c < 4; ++c)
      for (std::int64_t l = 0; l < 8; ++l)
        for (std::int64_t t = 0; t < 100; ++t)
          CHECK(grid.patch(f, c, l)[t] == win.slice(f, c)[l * 100 + t]);

  // single-patch case
  auto grid1 = token::segment(win, 800);
  CHECK(grid1.L == 1);

  CHECK_THROWS_AS(token::segment(win, 150), ValidationError);
}

TEST_CASE("token order is lexicographic (f, c, l)") {
  auto win = make_window(3, 4, 80);
  auto grid = token::segment(win, 10);  // L = 8
  CHECK(grid.flatten(0, 0, 1) == 1);
  CHECK(grid.flatten(1, 0, 0) == 4 * 8);
  // bijection: flatten(unflatten(n)) == n, and order is sorted
  std::int64_t prev = -1;
  for (std::int64_t f = 0; f < grid.F; ++f)
    for (std::int64_t c = 0; c < grid.C; ++c)
      for (std::int64_t l = 0; l < grid.L; ++l) {
        const std::int64_t n = grid.flatten(f, c, l);
        CHECK(n == prev + 1);
        prev = n;
        auto [ff, cc, ll] = grid.unflatten(n);
        CHECK(ff == f);
        CHECK(cc == c);
        CHECK(ll == l);
      }
}

TEST_CASE("embed applies shared projection plus positional tables") {
  token::TokenizerConfig cfg;
  cfg.patch_samples = 10;
  cfg.embed_dim = 6;
  cfg.F = 2;
  cfg.C = 3;
  cfg.L = 4;
  token::TokenizerParams params;
  params.init(cfg, 77);

  auto win = make_window(2, 3, 40);
  auto grid = token::segment(win, 10);
  auto seq = token::embed(grid, params);
  CHECK(seq.n_tokens() == 24);
  CHECK(seq.d == 6);

  // oracle: recompute one token by hand
  const std::int64_t f = 1, c = 2, l = 3;
  const double* patch = grid.patch(f, c, l);
  for (std::int64_t j = 0; j < 6; ++j) {
    double want = params.proj.b.value.data[static_cast<std::size_t>(j)];
    for (std::int64_t t = 0; t < 10; ++t)
      want += params.proj.W.value.at2(j, t) * patch[t];
    want += params.pos_f.value.at2(f, j) + params.pos_c.value.at2(c, j) +
            params.pos_l.value.at2(l, j);
    CHECK(seq.embeddings.at2(grid.flatten(f, c, l), j) ==
          doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("identical patches at different (f,c,l) differ by the positional tables") {
  token::TokenizerConfig cfg;
  cfg.patch_samples = 8;
  cfg.embed_dim = 5;
  cfg.F = 2;
  cfg.C = 2;
  cfg.L = 2;
  token::TokenizerParams params;
  params.init(cfg, 3);

  auto win = make_window(2, 2, 16);
  auto grid = token::segment(win, 8);
  // copy patch (0,0,0) into (1,1,1)
  std::copy(grid.patch(0, 0, 0), grid.patch(0, 0, 0) + 8, grid.patch(1, 1, 1));
  auto seq = token::embed(grid, params);

  for (std::int64_t j = 0; j < 5; ++j) {
    const double diff = seq.embeddings.at2(grid.flatten(1, 1, 1), j) -
                        seq.embeddings.at2(grid.flatten(0, 0, 0), j);
    const double want = (params.pos_f.value.at2(1, j) - params.pos_f.value.at2(0, j)) +
                        (params.pos_c.value.at2(1, j) - params.pos_c.value.at2(0, j)) +
                        (params.pos_l.value.at2(1, j) - params.pos_l.value.at2(0, j));
    CHECK(diff == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("zero weights and tables give all-zero embeddings plus bias") {
  token::TokenizerConfig cfg;
  cfg.patch_samples = 8;
  cfg.embed_dim = 5;
  cfg.F = 2;
  cfg.C = 2;
  cfg.L = 2;
  token::TokenizerParams params;
  params.init(cfg, 3);
  params.proj.W.value.fill(0.0);
  params.pos_f.value.fill(0.0);
  params.pos_c.value.fill(0.0);
  params.pos_l.value.fill(0.0);
  params.proj.b.value.fill(0.25);

  auto win = make_window(2, 2, 16);
  auto grid = token::segment(win, 8);
  auto seq = token::embed(grid, params);
  for (double v : seq.embeddings.data) CHECK(v == 0.25);
}

TEST_CASE("tokenizer sharing: permuting patches permutes projections") {
  token::TokenizerConfig cfg;
  cfg.patch_samples = 8;
  cfg.embed_dim = 5;
  cfg.F = 2;
  cfg.C = 2;
  cfg.L = 2;
  token::TokenizerParams params;
  params.init(cfg, 3);
  // isolate the projection: positional tables off
  params.pos_f.value.fill(0.0);
  params.pos_c.value.fill(0.0);
  params.pos_l.value.fill(0.0);

  auto win = make_window(2, 2, 16);
  auto grid = token::segment(win, 8);
  auto seq1 = token::embed(grid, params);

  auto grid2 = grid;
  // swap two patches
  for (std::int64_t t = 0; t < 8; ++t)
    std::swap(grid2.patch(0, 0, 1)[t], grid2.patch(1, 1, 0)[t]);
  auto seq2 = token::embed(grid2, params);

  const std::int64_t a = grid.flatten(0, 0, 1), b = grid.flatten(1, 1, 0);
  for (std::int64_t j = 0; j < 5; ++j) {
    CHECK(seq2.embeddings.at2(a, j) == doctest::Approx(seq1.embeddings.at2(b, j)));
    CHECK(seq2.embeddings.at2(b, j) == doctest::Approx(seq1.embeddings.at2(a, j)));
  }
}

TEST_CASE("uniform masking: exact count, determinism, identity at zero ratio") {
  auto win = make_window(12, 4, 800);
  auto grid = token::segment(win, 100);  // N = 384
  token::TokenizerConfig cfg;
  cfg.patch_samples = 100;
  cfg.embed_dim = 8;
  cfg.F = 12;
  cfg.C = 4;
  cfg.L = 8;
  token::TokenizerParams params;
  params.init(cfg, 5);

  MaskSpec spec;
  spec.ratio = 0.5;
  spec.seed = 9;
  auto res = token::apply_mask(grid, spec, params.mask_patch.value.data);
  CHECK(res.n_masked == 192);
  std::int64_t count = 0;
  for (auto f : res.mask) count += f;
  CHECK(count == 192);

  // unmasked patches bit-identical
  for (std::int64_t t = 0; t < grid.n_tokens(); ++t) {
    if (res.mask[static_cast<std::size_t>(t)]) continue;
    for (std::int64_t j = 0; j < grid.w; ++j)
      CHECK(res.corrupted.data[static_cast<std::size_t>(t * grid.w + j)] ==
            grid.data[static_cast<std::size_t>(t * grid.w + j)]);
  }
  // masked patches replaced by the mask patch
  for (std::int64_t t = 0; t < grid.n_tokens(); ++t) {
    if (!res.mask[static_cast<std::size_t>(t)]) continue;
    for (std::int64_t j = 0; j < grid.w; ++j)
      CHECK(res.corrupted.data[static_cast<std::size_t>(t * grid.w + j)] ==
            params.mask_patch.value.data[static_cast<std::size_t>(j)]);
    break;  // spot check one
  }

  auto res2 = token::apply_mask(grid, spec, params.mask_patch.value.data);
  CHECK(res2.mask == res.mask);

  MaskSpec zero = spec;
  zero.ratio = 0.0;
  auto resz = token::apply_mask(grid, zero, params.mask_patch.value.data);
  CHECK(resz.n_masked == 0);
  CHECK(resz.corrupted.data == grid.data);
}

TEST_CASE("axis-structured masking masks whole slices") {
  auto win = make_window(6, 4, 400);
  auto grid = token::segment(win, 100);  // L=4, N=96
  MaskSpec spec;
  spec.ratio = 0.5;
  spec.mode = MaskSpec::Mode::kAxisStructured;
  spec.seed = 1234;
  std::vector<double> mask_patch(100, 0.0);
  auto res = token::apply_mask(grid, spec, mask_patch);

  const std::int64_t target = 48;
  // reached the target within one slice's worth (largest slice = C*L = 16)
  CHECK(res.n_masked >= target);
  CHECK(res.n_masked <= target + 24);

  // the mask decomposes into whole slices: verify every masked token belongs
  // to at least one fully-masked f, c or l slice
  auto slice_fully_masked = [&](int axis, std::int64_t idx) {
    for (std::int64_t f = 0; f < grid.F; ++f)
      for (std::int64_t c = 0; c < grid.C; ++c)
        for (std::int64_t l = 0; l < grid.L; ++l) {
          if ((axis == 0 && f != idx) || (axis == 1 && c != idx) ||
              (axis == 2 && l != idx))
            continue;
          if (!res.mask[static_cast<std::size_t>(grid.flatten(f, c, l))]) return false;
        }
    return true;
  };
  for (std::int64_t t = 0; t < grid.n_tokens(); ++t) {
    if (!res.mask[static_cast<std::size_t>(t)]) continue;
    auto [f, c, l] = grid.unflatten(t);
    CHECK((slice_fully_masked(0, f) || slice_fully_masked(1, c) ||
           slice_fully_masked(2, l)));
  }
}

TEST_CASE("embed_backward routes masked-patch gradients to the mask token") {
  token::TokenizerConfig cfg;
  cfg.patch_samples = 4;
  cfg.embed_dim = 3;
  cfg.F = 1;
  cfg.C = 1;
  cfg.L = 2;
  token::TokenizerParams params;
  params.init(cfg, 9);

  auto win = make_window(1, 1, 8);
  auto grid = token::segment(win, 4);
  MaskSpec spec;
  spec.ratio = 0.5;
  spec.seed = 2;
  auto res = token::apply_mask(grid, spec, params.mask_patch.value.data);
  REQUIRE(res.n_masked == 1);

  nn::ParamSet ps;
  params.register_into(ps);
  ps.zero_grad();

  std::vector<double> dE(static_cast<std::size_t>(2 * 3), 1.0);
  token::embed_backward(res.corrupted, params, dE.data(), &res.mask);

  // oracle: dmask_patch = W^T dE(masked token)
  const std::int64_t masked = res.mask[0] ? 0 : 1;
  for (std::int64_t t = 0; t < 4; ++t) {
    double want = 0.0;
    for (std::int64_t j = 0; j < 3; ++j)
      want += params.proj.W.value.at2(j, t) * dE[static_cast<std::size_t>(masked * 3 + j)];
    CHECK(params.mask_patch.grad.data[static_cast<std::size_t>(t)] ==
          doctest::Approx(want).epsilon(1e-12));
  }
}

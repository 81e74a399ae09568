#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "exg/dataset.hpp"
#include "exg/encoder.hpp"
#include "exg/nn.hpp"
#include "exg/tokenize.hpp"

namespace exg::pretrain {

enum class Objective { AE, MR, A, P, MA, MP };

inline constexpr Objective kAllObjectives[] = {Objective::AE, Objective::MR,
                                               Objective::A,  Objective::P,
                                               Objective::MA, Objective::MP};

const char* objective_name(Objective o);
std::optional<Objective> objective_from_name(const std::string& s);

struct ObjectiveSet {
  std::vector<Objective> enabled;  // unique, in canonical order

  static ObjectiveSet all();
  static ObjectiveSet of(std::vector<Objective> objs);
  bool has(Objective o) const;
  bool needs_mask() const;  // MR / MA / MP present
  void validate() const;    // nonempty
};

struct LossWeights {
  std::map<Objective, double> lambda;
  static LossWeights defaults();  // AE=2, MR=2, A=1, P=1, MA=1, MP=1
  double at(Objective o) const;
};

// Per-patch spectra in (f,c,l) token order, n_bins = w/2 + 1.
struct SpectralTarget {
  std::int64_t n_tokens = 0, n_bins = 0;
  Tensor amplitude;  // [N, n_bins], >= 0
  Tensor phase;      // [N, n_bins], (-pi, pi]; 0 where amplitude < 1e-8
};

SpectralTarget fft_targets(const token::PatchGrid& grid);

inline double wrap_angle(double a) {
  double r = std::fmod(a + M_PI, 2.0 * M_PI);
  if (r < 0) r += 2.0 * M_PI;
  return r - M_PI;
}

struct DecoderParams {
  struct Mlp {
    nn::Linear l1, l2;  // d -> hidden(64) -> out_width
  };
  std::map<Objective, Mlp> mlps;
  std::int64_t hidden = 64;

  void init(const ObjectiveSet& objs, std::int64_t d, std::int64_t w,
            std::uint64_t seed);
  void register_into(nn::ParamSet& ps);
  bool has(Objective o) const { return mlps.count(o) > 0; }
};

// Reconstruction head for one objective over a latent sequence [N, d].
// Output width is w for AE/MR and w/2+1 for the spectral tasks.
Tensor decode(const Tensor& latents, Objective o, const DecoderParams& params);

struct LossBreakdown {
  std::map<Objective, double> task_mae;
  double total = 0.0;
};

// total = sum_o lambda_o * MAE_o. Phase tasks use wrapped angular error with
// near-zero-amplitude bins excluded.
LossBreakdown loss_total(const std::map<Objective, Tensor>& recons,
                         const token::PatchGrid& target_grid,
                         const SpectralTarget& spectral, const LossWeights& weights);

struct PretrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 256;
  double lr_start = 0.01;
  double lr_end = 0.001;
  double weight_decay = 0.01;
  double mask_ratio = 0.5;
  token::MaskSpec::Mode mask_mode = token::MaskSpec::Mode::kUniformToken;
  double holdout_frac = 0.2;
  double noise_sigma = 0.05;  // train-time augmentation
  bool mr_masked_only = false;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
};

// Tokenizer + encoder + reconstruction decoders.
struct Model {
  token::TokenizerParams tokenizer;
  enc::Encoder encoder;
  DecoderParams decoders;

  void register_into(nn::ParamSet& ps) {
    tokenizer.register_into(ps);
    encoder.register_into(ps);
    decoders.register_into(ps);
  }
};

struct EpochRow {
  std::int64_t epoch = 0;  // 0 = before any update
  std::string split;       // "train" | "heldout"
  LossBreakdown loss;
  double lr = 0.0;
};

struct PretrainResult {
  std::vector<EpochRow> curve;
  double heldout_initial = 0.0;
  double heldout_final = 0.0;
  std::vector<std::int64_t> train_idx, heldout_idx;
  // masked-position MR loss tracked alongside the full-support loss
  double mr_masked_only_final = 0.0;
  double mr_all_final = 0.0;
};

// Forward pass (and backward when requested) of a single window; accumulates
// parameter gradients. Exposed for tests and diagnostics.
LossBreakdown window_step(Model& model, const sigproc::BandStack& win,
                          const ObjectiveSet& objs, const LossWeights& weights,
                          const PretrainConfig& cfg, std::uint64_t mask_seed,
                          bool do_backward);

// Joint training of all enabled objectives; deterministic given cfg.seed.
// train_fraction < 1 subsamples the training pool (the held-out split stays
// fixed), for the data-scale study.
PretrainResult run_pretrain(Model& model, const data::WindowSet& ds,
                            const ObjectiveSet& objs, const LossWeights& weights,
                            const PretrainConfig& cfg,
                            double train_fraction = 1.0);

}  // namespace exg::pretrain

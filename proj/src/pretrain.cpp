#include "exg/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "exg/dsp.hpp"
#include "exg/errors.hpp"
#include "exg/linalg.hpp"

namespace exg::pretrain {

namespace {
constexpr double kAmpEpsilon = 1e-8;
}

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::AE: return "AE";
    case Objective::MR: return "MR";
    case Objective::A: return "A";
    case Objective::P: return "P";
    case Objective::MA: return "MA";
    case Objective::MP: return "MP";
  }
  return "?";
}

std::optional<Objective> objective_from_name(const std::string& s) {
  for (Objective o : kAllObjectives)
    if (s == objective_name(o)) return o;
  return std::nullopt;
}

ObjectiveSet ObjectiveSet::all() {
  ObjectiveSet set;
  for (Objective o : kAllObjectives) set.enabled.push_back(o);
  return set;
}

ObjectiveSet ObjectiveSet::of(std::vector<Objective> objs) {
  ObjectiveSet set;
  for (Objective o : kAllObjectives)
    if (std::find(objs.begin(), objs.end(), o) != objs.end())
      set.enabled.push_back(o);
  return set;
}

bool ObjectiveSet::has(Objective o) const {
  return std::find(enabled.begin(), enabled.end(), o) != enabled.end();
}

bool ObjectiveSet::needs_mask() const {
  return has(Objective::MR) || has(Objective::MA) || has(Objective::MP);
}

void ObjectiveSet::validate() const {
  if (enabled.empty()) throw ValidationError("objective set must be nonempty");
}

LossWeights LossWeights::defaults() {
  LossWeights w;
  w.lambda = {{Objective::AE, 2.0}, {Objective::MR, 2.0}, {Objective::A, 1.0},
              {Objective::P, 1.0},  {Objective::MA, 1.0}, {Objective::MP, 1.0}};
  return w;
}

double LossWeights::at(Objective o) const {
  auto it = lambda.find(o);
  return it == lambda.end() ? 1.0 : it->second;
}

SpectralTarget fft_targets(const token::PatchGrid& grid) {
  if (grid.w % 2 != 0) throw ValidationError("fft_targets: patch size must be even");
  const std::int64_t N = grid.n_tokens();
  dsp::RealDftPlan plan(static_cast<int>(grid.w));
  SpectralTarget tgt;
  tgt.n_tokens = N;
  tgt.n_bins = plan.n_bins;
  tgt.amplitude.resize({N, tgt.n_bins});
  tgt.phase.resize({N, tgt.n_bins});

  Tensor re({N, tgt.n_bins}), im({N, tgt.n_bins});
  plan.transform(grid.data.data(), re.ptr(), im.ptr(), N);
  for (std::int64_t i = 0; i < N * tgt.n_bins; ++i) {
    const double a = std::hypot(re.data[static_cast<std::size_t>(i)],
                                im.data[static_cast<std::size_t>(i)]);
    tgt.amplitude.data[static_cast<std::size_t>(i)] = a;
    tgt.phase.data[static_cast<std::size_t>(i)] =
        a < kAmpEpsilon ? 0.0
                        : std::atan2(im.data[static_cast<std::size_t>(i)],
                                     re.data[static_cast<std::size_t>(i)]);
  }
  return tgt;
}

void DecoderParams::init(const ObjectiveSet& objs, std::int64_t d, std::int64_t w,
                         std::uint64_t seed) {
  mlps.clear();
  Rng rng(seed);
  const std::int64_t n_bins = w / 2 + 1;
  for (Objective o : objs.enabled) {
    const std::int64_t out_w =
        (o == Objective::AE || o == Objective::MR) ? w : n_bins;
    Mlp mlp;
    const std::string base = std::string("decoder.") + objective_name(o);
    mlp.l1.init(base + ".l1", hidden, d, true, rng);
    mlp.l2.init(base + ".l2", out_w, hidden, true, rng);
    mlps.emplace(o, std::move(mlp));
  }
}

void DecoderParams::register_into(nn::ParamSet& ps) {
  for (auto& [o, mlp] : mlps) {
    mlp.l1.register_into(ps);
    mlp.l2.register_into(ps);
  }
}

Tensor decode(const Tensor& latents, Objective o, const DecoderParams& params) {
  auto it = params.mlps.find(o);
  if (it == params.mlps.end())
    throw ValidationError(std::string("decode: objective ") + objective_name(o) +
                          " is not enabled");
  const std::int64_t N = latents.shape[0];
  const auto& mlp = it->second;
  Tensor h({N, params.hidden}), ha({N, params.hidden}), out({N, mlp.l2.out});
  mlp.l1.forward(latents.ptr(), h.ptr(), N);
  nn::silu(h.ptr(), ha.ptr(), N * params.hidden);
  mlp.l2.forward(ha.ptr(), out.ptr(), N);
  return out;
}

namespace {

double plain_mae(const double* r, const double* t, std::int64_t n) {
  return kernels::active().asum_diff(r, t, static_cast<std::size_t>(n)) /
         static_cast<double>(n);
}

// wrapped angular MAE over bins with live amplitude; n_live returned
double phase_mae(const double* r, const double* t, const double* amp,
                 std::int64_t n, std::int64_t* n_live_out) {
  double acc = 0.0;
  std::int64_t live = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (amp[i] < kAmpEpsilon) continue;
    acc += std::abs(wrap_angle(r[i] - t[i]));
    ++live;
  }
  if (n_live_out) *n_live_out = live;
  return live ? acc / static_cast<double>(live) : 0.0;
}

}  // namespace

LossBreakdown loss_total(const std::map<Objective, Tensor>& recons,
                         const token::PatchGrid& target_grid,
                         const SpectralTarget& spectral, const LossWeights& weights) {
  LossBreakdown out;
  for (const auto& [o, recon] : recons) {
    double mae = 0.0;
    switch (o) {
      case Objective::AE:
      case Objective::MR:
        mae = plain_mae(recon.ptr(), target_grid.data.data(), recon.numel());
        break;
      case Objective::A:
      case Objective::MA:
        mae = plain_mae(recon.ptr(), spectral.amplitude.ptr(), recon.numel());
        break;
      case Objective::P:
      case Objective::MP:
        mae = phase_mae(recon.ptr(), spectral.phase.ptr(), spectral.amplitude.ptr(),
                        recon.numel(), nullptr);
        break;
    }
    if (std::isnan(mae))
      throw TrainingError(std::string("NaN loss in task ") + objective_name(o));
    out.task_mae[o] = mae;
    out.total += weights.at(o) * mae;
  }
  return out;
}

namespace {

struct WindowWork {
  enc::Trace trace_z, trace_zm;
  Tensor z, zm;
  Tensor dz, dzm;
};

// Forward (and optionally backward) pass over one window. Returns the loss
// breakdown; also tracks the masked-position-only MR loss.
LossBreakdown window_pass(Model& model, const sigproc::BandStack& win,
                          const ObjectiveSet& objs, const LossWeights& weights,
                          const PretrainConfig& cfg, std::uint64_t mask_seed,
                          bool do_backward, WindowWork& work,
                          double* mr_masked = nullptr) {
  const auto& K = kernels::active();
  const std::int64_t d = model.tokenizer.cfg.embed_dim;
  const std::int64_t w = model.tokenizer.cfg.patch_samples;

  auto grid = token::segment(win, w);
  const std::int64_t N = grid.n_tokens();
  const bool needs_clean =
      objs.has(Objective::AE) || objs.has(Objective::A) || objs.has(Objective::P);
  const bool needs_mask = objs.needs_mask();
  const bool needs_spectral = objs.has(Objective::A) || objs.has(Objective::P) ||
                              objs.has(Objective::MA) || objs.has(Objective::MP);

  SpectralTarget spectral;
  if (needs_spectral) spectral = fft_targets(grid);

  token::TokenSequence tokens, tokens_m;
  token::MaskResult maskres;
  if (needs_clean) {
    tokens = token::embed(grid, model.tokenizer);
    work.z.resize({N, d});
    model.encoder.forward(tokens.embeddings.ptr(), work.z.ptr(), N,
                          do_backward ? &work.trace_z : nullptr);
  }
  if (needs_mask) {
    token::MaskSpec spec;
    spec.ratio = cfg.mask_ratio;
    spec.mode = cfg.mask_mode;
    spec.seed = mask_seed;
    maskres = token::apply_mask(grid, spec, model.tokenizer.mask_patch.value.data);
    tokens_m = token::embed(maskres.corrupted, model.tokenizer);
    work.zm.resize({N, d});
    model.encoder.forward(tokens_m.embeddings.ptr(), work.zm.ptr(), N,
                          do_backward ? &work.trace_zm : nullptr);
  }

  if (do_backward) {
    work.dz.resize({N, d});
    work.dz.fill(0.0);
    work.dzm.resize({N, d});
    work.dzm.fill(0.0);
  }

  LossBreakdown breakdown;
  for (Objective o : objs.enabled) {
    const bool masked_input = (o == Objective::MR || o == Objective::MA ||
                               o == Objective::MP);
    const Tensor& z = masked_input ? work.zm : work.z;
    auto& mlp = model.decoders.mlps.at(o);
    const std::int64_t out_w = mlp.l2.out;

    Tensor h({N, model.decoders.hidden}), ha({N, model.decoders.hidden});
    Tensor recon({N, out_w});
    mlp.l1.forward(z.ptr(), h.ptr(), N);
    nn::silu(h.ptr(), ha.ptr(), N * model.decoders.hidden);
    mlp.l2.forward(ha.ptr(), recon.ptr(), N);

    const double lam = weights.at(o);
    double mae = 0.0;
    Tensor drecon;
    if (do_backward) drecon.resize({N, out_w});

    const std::int64_t n_el = N * out_w;
    if (o == Objective::AE || o == Objective::MR) {
      const double* tgt = grid.data.data();
      bool masked_support = (o == Objective::MR && cfg.mr_masked_only);
      std::int64_t support = 0;
      double acc = 0.0, acc_masked = 0.0;
      std::int64_t masked_count = 0;
      for (std::int64_t t = 0; t < N; ++t) {
        const bool is_masked = needs_mask && maskres.mask[static_cast<std::size_t>(t)];
        for (std::int64_t j = 0; j < out_w; ++j) {
          const std::int64_t idx = t * out_w + j;
          const double diff = recon.data[static_cast<std::size_t>(idx)] - tgt[idx];
          const double a = std::abs(diff);
          if (o == Objective::MR && is_masked) {
            acc_masked += a;
            ++masked_count;
          }
          if (masked_support && !is_masked) continue;
          acc += a;
          ++support;
          if (do_backward)
            drecon.data[static_cast<std::size_t>(idx)] =
                (diff > 0.0) - (diff < 0.0);
        }
      }
      mae = support ? acc / static_cast<double>(support) : 0.0;
      if (do_backward && support)
        K.scal(lam / static_cast<double>(support), drecon.ptr(),
               static_cast<std::size_t>(n_el));
      if (o == Objective::MR && mr_masked && masked_count)
        *mr_masked = acc_masked / static_cast<double>(masked_count);
    } else if (o == Objective::A || o == Objective::MA) {
      const double* tgt = spectral.amplitude.ptr();
      double acc = 0.0;
      for (std::int64_t i = 0; i < n_el; ++i) {
        const double diff = recon.data[static_cast<std::size_t>(i)] - tgt[i];
        acc += std::abs(diff);
        if (do_backward)
          drecon.data[static_cast<std::size_t>(i)] = (diff > 0.0) - (diff < 0.0);
      }
      mae = acc / static_cast<double>(n_el);
      if (do_backward)
        K.scal(lam / static_cast<double>(n_el), drecon.ptr(),
               static_cast<std::size_t>(n_el));
    } else {  // P / MP
      const double* tgt = spectral.phase.ptr();
      const double* amp = spectral.amplitude.ptr();
      double acc = 0.0;
      std::int64_t live = 0;
      for (std::int64_t i = 0; i < n_el; ++i) {
        if (amp[i] < kAmpEpsilon) continue;
        const double diff = wrap_angle(recon.data[static_cast<std::size_t>(i)] - tgt[i]);
        acc += std::abs(diff);
        ++live;
        if (do_backward)
          drecon.data[static_cast<std::size_t>(i)] = (diff > 0.0) - (diff < 0.0);
      }
      mae = live ? acc / static_cast<double>(live) : 0.0;
      if (do_backward && live)
        K.scal(lam / static_cast<double>(live), drecon.ptr(),
               static_cast<std::size_t>(n_el));
    }

    if (std::isnan(mae))
      throw TrainingError(std::string("NaN loss in task ") + objective_name(o));
    breakdown.task_mae[o] = mae;
    breakdown.total += lam * mae;

    if (do_backward) {
      Tensor dha({N, model.decoders.hidden});
      dha.fill(0.0);
      mlp.l2.backward(ha.ptr(), drecon.ptr(), dha.ptr(), N);
      Tensor dh({N, model.decoders.hidden});
      dh.fill(0.0);
      nn::silu_backward(h.ptr(), dha.ptr(), dh.ptr(), N * model.decoders.hidden);
      double* dzp = masked_input ? work.dzm.ptr() : work.dz.ptr();
      mlp.l1.backward(z.ptr(), dh.ptr(), dzp, N);
    }
  }

  if (do_backward) {
    if (needs_clean) {
      Tensor dtok({N, d});
      dtok.fill(0.0);
      model.encoder.backward(work.trace_z, work.dz.ptr(), dtok.ptr());
      token::embed_backward(grid, model.tokenizer, dtok.ptr(), nullptr);
    }
    if (needs_mask) {
      Tensor dtok({N, d});
      dtok.fill(0.0);
      model.encoder.backward(work.trace_zm, work.dzm.ptr(), dtok.ptr());
      token::embed_backward(maskres.corrupted, model.tokenizer, dtok.ptr(),
                            &maskres.mask);
    }
  }
  return breakdown;
}

}  // namespace

LossBreakdown window_step(Model& model, const sigproc::BandStack& win,
                          const ObjectiveSet& objs, const LossWeights& weights,
                          const PretrainConfig& cfg, std::uint64_t mask_seed,
                          bool do_backward) {
  WindowWork work;
  return window_pass(model, win, objs, weights, cfg, mask_seed, do_backward, work);
}

namespace {

LossBreakdown average(const std::vector<LossBreakdown>& rows) {
  LossBreakdown avg;
  if (rows.empty()) return avg;
  for (const auto& r : rows) {
    avg.total += r.total;
    for (const auto& [o, v] : r.task_mae) avg.task_mae[o] += v;
  }
  const double n = static_cast<double>(rows.size());
  avg.total /= n;
  for (auto& [o, v] : avg.task_mae) v /= n;
  return avg;
}

}  // namespace

PretrainResult run_pretrain(Model& model, const data::WindowSet& ds,
                            const ObjectiveSet& objs, const LossWeights& weights,
                            const PretrainConfig& cfg, double train_fraction) {
  objs.validate();
  if (ds.size() == 0) throw ValidationError("pretraining dataset is empty");
  if (train_fraction <= 0.0 || train_fraction > 1.0)
    throw ValidationError("train_fraction outside (0, 1]");

  PretrainResult res;

  // window-level split, seeded
  std::vector<std::int64_t> perm(static_cast<std::size_t>(ds.size()));
  for (std::int64_t i = 0; i < ds.size(); ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng split_rng(Rng::mix(cfg.seed, 0xBEEF));
  split_rng.shuffle(perm);
  const std::int64_t n_held = std::llround(cfg.holdout_frac * static_cast<double>(ds.size()));
  res.heldout_idx.assign(perm.begin(), perm.begin() + n_held);
  std::vector<std::int64_t> train_pool(perm.begin() + n_held, perm.end());
  const std::int64_t n_train = std::max<std::int64_t>(
      1, std::llround(train_fraction * static_cast<double>(train_pool.size())));
  res.train_idx.assign(train_pool.begin(), train_pool.begin() + n_train);
  if (res.train_idx.empty()) throw ValidationError("no training windows after split");

  WindowWork work;
  double mr_masked_acc = 0.0;

  auto eval_heldout = [&](std::int64_t epoch) -> LossBreakdown {
    std::vector<LossBreakdown> rows;
    double mr_masked_sum = 0.0, mr_all_sum = 0.0;
    std::int64_t mr_rows = 0;
    for (std::int64_t wi : res.heldout_idx) {
      auto win = ds.window(wi);
      double mr_m = -1.0;
      auto row = window_pass(model, win, objs, weights, cfg,
                             Rng::mix(cfg.seed, 0x5EED0000 + static_cast<std::uint64_t>(wi)),
                             false, work, &mr_m);
      if (mr_m >= 0.0) {
        mr_masked_sum += mr_m;
        mr_all_sum += row.task_mae.count(Objective::MR) ? row.task_mae[Objective::MR] : 0.0;
        ++mr_rows;
      }
      rows.push_back(std::move(row));
    }
    if (mr_rows) {
      res.mr_masked_only_final = mr_masked_sum / static_cast<double>(mr_rows);
      res.mr_all_final = mr_all_sum / static_cast<double>(mr_rows);
    }
    (void)epoch;
    return average(rows);
  };

  nn::ParamSet params;
  model.register_into(params);
  nn::AdamW opt;
  opt.weight_decay = cfg.weight_decay;

  if (!res.heldout_idx.empty()) {
    auto h0 = eval_heldout(0);
    res.heldout_initial = h0.total;
    res.curve.push_back({0, "heldout", h0, 0.0});
  }

  const std::int64_t batches_per_epoch =
      (static_cast<std::int64_t>(res.train_idx.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  const std::int64_t total_steps = cfg.epochs * batches_per_epoch;
  std::int64_t step = 0;

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = res.train_idx;
    Rng epoch_rng(Rng::mix(cfg.seed, 0xE90C + static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(order);

    std::vector<LossBreakdown> train_rows;
    double lr = cfg.lr_start;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      params.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const std::int64_t wi = order[k];
        auto win = ds.window(wi);
        if (cfg.noise_sigma > 0.0)
          win = sigproc::augment_noise(
              win, cfg.noise_sigma,
              Rng::mix(cfg.seed, 0xA060000ULL + static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                     static_cast<std::uint64_t>(wi)));
        auto row = window_pass(
            model, win, objs, weights, cfg,
            Rng::mix(cfg.seed, 0x3A5C0000ULL + static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                   static_cast<std::uint64_t>(wi)),
            true, work, &mr_masked_acc);
        train_rows.push_back(std::move(row));
      }
      // average the batch gradient
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      const auto& K = kernels::active();
      for (auto* p : params.items)
        K.scal(inv, p->grad.ptr(), static_cast<std::size_t>(p->grad.numel()));
      params.clip_grad(cfg.clip_norm);
      lr = nn::cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end);
      opt.step(params, lr);
      ++step;
    }

    res.curve.push_back({epoch, "train", average(train_rows), lr});
    if (!res.heldout_idx.empty()) {
      auto h = eval_heldout(epoch);
      res.heldout_final = h.total;
      res.curve.push_back({epoch, "heldout", h, lr});
    }
  }
  return res;
}

}  // namespace exg::pretrain

#include "exg/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "exg/errors.hpp"
#include "exg/linalg.hpp"

namespace exg::analysis {

SaliencyMap saliency(heads::TaskModel& model, const sigproc::BandStack& window) {
  const std::int64_t d = model.tokenizer.cfg.embed_dim;
  auto grid = token::segment(window, model.tokenizer.cfg.patch_samples);
  auto tokens = token::embed(grid, model.tokenizer);
  const std::int64_t N = tokens.n_tokens();

  enc::Trace trace;
  Tensor z({N, d});
  model.encoder.forward(tokens.embeddings.ptr(), z.ptr(), N, &trace);

  // d(score)/dz for the predicted-class logit or the regression norm
  Tensor dz({N, d});
  dz.fill(0.0);
  nn::ParamSet scratch;
  model.register_all(scratch);
  scratch.zero_grad();

  if (model.task == "classification") {
    auto pooled = heads::pool_mean(z);
    std::vector<double> logits(static_cast<std::size_t>(model.cls.K));
    model.cls.linear.forward(pooled.data(), logits.data(), 1);
    const int k = heads::argmax_class(logits);
    std::vector<double> dlogits(logits.size(), 0.0);
    dlogits[static_cast<std::size_t>(k)] = 1.0;
    std::vector<double> dpooled(static_cast<std::size_t>(d), 0.0);
    model.cls.linear.backward(pooled.data(), dlogits.data(), dpooled.data(), 1);
    const double inv = 1.0 / static_cast<double>(N);
    for (std::int64_t i = 0; i < N; ++i)
      kernels::active().axpy(inv, dpooled.data(), dz.ptr() + i * d,
                             static_cast<std::size_t>(d));
  } else {
    auto out = heads::regress(z, model.reg);
    const double norm = std::hypot(out[0], out[1]);
    if (norm > 0.0) {
      Tensor dpt({N, 2});
      const double inv = 1.0 / static_cast<double>(N);
      for (std::int64_t i = 0; i < N; ++i) {
        dpt.at2(i, 0) = out[0] / norm * inv;
        dpt.at2(i, 1) = out[1] / norm * inv;
      }
      model.reg.linear.backward(z.ptr(), dpt.ptr(), dz.ptr(), N);
    }
  }

  Tensor dtok({N, d});
  dtok.fill(0.0);
  model.encoder.backward(trace, dz.ptr(), dtok.ptr());
  scratch.zero_grad();  // saliency must not leak gradients into training state

  SaliencyMap map;
  map.full.resize({grid.F, grid.C, grid.L});
  for (std::int64_t t = 0; t < N; ++t) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < d; ++j)
      acc += std::abs(dtok.at2(t, j) * tokens.embeddings.at2(t, j));
    map.full.data[static_cast<std::size_t>(t)] = acc;
  }

  map.band_mass.assign(static_cast<std::size_t>(grid.F), 0.0);
  for (std::int64_t f = 0; f < grid.F; ++f) {
    double acc = 0.0;
    for (std::int64_t c = 0; c < grid.C; ++c)
      for (std::int64_t l = 0; l < grid.L; ++l)
        acc += map.full.data[static_cast<std::size_t>((f * grid.C + c) * grid.L + l)];
    map.band_mass[static_cast<std::size_t>(f)] =
        acc / static_cast<double>(grid.C * grid.L);
  }
  double total = 0.0;
  for (double v : map.band_mass) total += v;
  if (total < 1e-300) {
    // degenerate gradients: uniform map
    std::fill(map.band_mass.begin(), map.band_mass.end(),
              1.0 / static_cast<double>(grid.F));
  } else {
    for (double& v : map.band_mass) v /= total;
  }
  return map;
}

BandPreset band_preset(const std::string& name) {
  BandPreset preset;
  preset.name = name;
  if (name == "1-band") {
    preset.bank.bands = {{"wide", 0.1, 75.0}};
  } else if (name == "2-band") {
    preset.bank.bands = {{"low", 0.1, 15.0}, {"high", 15.0, 75.0}};
  } else if (name == "4-band") {
    preset.bank.bands = {{"b0", 0.1, 5.0},
                         {"b1", 5.0, 15.0},
                         {"b2", 15.0, 35.0},
                         {"b3", 35.0, 75.0}};
  } else if (name == "12-band") {
    preset.bank = sigproc::default_filter_bank();
  } else {
    throw ValidationError("unknown band preset '" + name + "'");
  }
  return preset;
}

std::vector<std::string> preset_names() {
  return {"1-band", "2-band", "4-band", "12-band"};
}

TrainEvalResult train_eval(const data::WindowSet& task_ds,
                           const data::WindowSet* corpus, const HarnessConfig& cfg) {
  if (!task_ds.labeled()) throw ValidationError("train_eval: unlabeled task dataset");
  const bool classification = !task_ds.labels.empty();
  if (task_ds.Tw % cfg.patch_samples != 0)
    throw ValidationError("window length not divisible by patch size");

  token::TokenizerConfig tok;
  tok.patch_samples = cfg.patch_samples;
  tok.embed_dim = cfg.embed_dim;
  tok.F = task_ds.F;
  tok.C = task_ds.C;
  tok.L = task_ds.Tw / cfg.patch_samples;

  enc::EncoderConfig ecfg = cfg.encoder;
  ecfg.model_dim = cfg.embed_dim;
  ecfg.seed = Rng::mix(cfg.seed, 0xE4C);

  TrainEvalResult res;

  pretrain::Model pre_model;
  pre_model.tokenizer.init(tok, Rng::mix(cfg.seed, 0x70C));
  pre_model.encoder.init(ecfg);
  if (corpus && cfg.do_pretrain) {
    if (corpus->F != task_ds.F || corpus->C != task_ds.C || corpus->Tw != task_ds.Tw)
      throw ValidationError("pretraining corpus and task windows disagree in shape");
    pre_model.decoders.init(cfg.objectives, cfg.embed_dim, cfg.patch_samples,
                            Rng::mix(cfg.seed, 0xDEC));
    res.pretrain = pretrain::run_pretrain(pre_model, *corpus, cfg.objectives,
                                          cfg.weights, cfg.pre);
  }

  res.model.task = classification ? "classification" : "gaze";
  res.model.tokenizer = pre_model.tokenizer;
  res.model.encoder = pre_model.encoder;
  if (classification) {
    int K = 0;
    for (int v : task_ds.labels) K = std::max(K, v + 1);
    res.model.cls.init(K, cfg.embed_dim, Rng::mix(cfg.seed, 0xC15));
  } else {
    res.model.reg.init(cfg.embed_dim, Rng::mix(cfg.seed, 0x4E6));
  }

  auto split = datagen::make_splits(task_ds, cfg.split);

  heads::FinetuneConfig fin = cfg.fin;
  fin.task = res.model.task;
  res.finetune = heads::run_finetune(res.model, task_ds, split.train, split.test, fin);
  res.metrics = res.finetune.metrics;
  return res;
}

std::vector<TableRow> ablate_bands(const datagen::DatasetManifest& task_manifest,
                                   const std::vector<std::string>& presets,
                                   const HarnessConfig& cfg) {
  std::vector<TableRow> rows;
  for (const auto& name : presets) {
    auto preset = band_preset(name);
    auto ds = datagen::load_windows(task_manifest, preset.bank);
    auto res = train_eval(ds, nullptr, cfg);
    TableRow row;
    row.name = name;
    row.values["n_bands"] = static_cast<double>(preset.bank.size());
    row.values["n_tokens"] =
        static_cast<double>(preset.bank.size() * ds.C * (ds.Tw / cfg.patch_samples));
    if (res.metrics.task == "classification")
      row.values["macro_f1"] = res.metrics.macro_f1;
    else
      row.values["angular_error_deg"] = res.metrics.angular_error_deg;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TableRow> ablate_objectives(const data::WindowSet& corpus,
                                        const data::WindowSet& task,
                                        const HarnessConfig& cfg) {
  std::vector<TableRow> rows;
  auto run_with = [&](const std::string& row_name,
                      const pretrain::ObjectiveSet& objs) {
    auto run_cfg = cfg;
    run_cfg.objectives = objs;
    run_cfg.do_pretrain = true;
    auto res = train_eval(task, &corpus, run_cfg);
    TableRow row;
    row.name = row_name;
    if (res.metrics.task == "classification")
      row.values["macro_f1"] = res.metrics.macro_f1;
    else
      row.values["angular_error_deg"] = res.metrics.angular_error_deg;
    // final heldout per-task losses; the omitted task is absent by construction
    for (const auto& er : res.pretrain.curve) {
      if (er.split != "heldout") continue;
      for (const auto& [o, v] : er.loss.task_mae)
        row.values[std::string("loss_") + pretrain::objective_name(o)] = v;
    }
    rows.push_back(std::move(row));
  };

  run_with("full", pretrain::ObjectiveSet::all());
  for (pretrain::Objective o : pretrain::kAllObjectives) {
    std::vector<pretrain::Objective> keep;
    for (pretrain::Objective k : pretrain::kAllObjectives)
      if (k != o) keep.push_back(k);
    run_with(std::string("wo_") + pretrain::objective_name(o),
             pretrain::ObjectiveSet::of(keep));
  }
  return rows;
}

std::vector<ScaleRow> scale_study(const std::vector<double>& fractions,
                                  const data::WindowSet& corpus,
                                  const data::WindowSet* task,
                                  const HarnessConfig& cfg) {
  for (double f : fractions)
    if (!(f > 0.0) || f > 1.0)
      throw ValidationError("scale_study: fractions must lie in (0, 1]");

  std::vector<ScaleRow> rows;
  for (double f : fractions) {
    ScaleRow row;
    row.fraction = f;
    if (task) {
      auto run_cfg = cfg;
      run_cfg.pre.seed = cfg.pre.seed;  // shared split across fractions
      // train_eval with fraction: reuse run_pretrain's fraction argument
      token::TokenizerConfig tok;
      tok.patch_samples = cfg.patch_samples;
      tok.embed_dim = cfg.embed_dim;
      tok.F = corpus.F;
      tok.C = corpus.C;
      tok.L = corpus.Tw / cfg.patch_samples;
      enc::EncoderConfig ecfg = cfg.encoder;
      ecfg.model_dim = cfg.embed_dim;
      ecfg.seed = Rng::mix(cfg.seed, 0xE4C);

      pretrain::Model pre_model;
      pre_model.tokenizer.init(tok, Rng::mix(cfg.seed, 0x70C));
      pre_model.encoder.init(ecfg);
      pre_model.decoders.init(cfg.objectives, cfg.embed_dim, cfg.patch_samples,
                              Rng::mix(cfg.seed, 0xDEC));
      row.pre = pretrain::run_pretrain(pre_model, corpus, cfg.objectives,
                                       cfg.weights, cfg.pre, f);

      heads::TaskModel tm;
      tm.task = task->labels.empty() ? "gaze" : "classification";
      tm.tokenizer = pre_model.tokenizer;
      tm.encoder = pre_model.encoder;
      if (tm.task == "classification") {
        int K = 0;
        for (int v : task->labels) K = std::max(K, v + 1);
        tm.cls.init(K, cfg.embed_dim, Rng::mix(cfg.seed, 0xC15));
      } else {
        tm.reg.init(cfg.embed_dim, Rng::mix(cfg.seed, 0x4E6));
      }
      auto split = datagen::make_splits(*task, cfg.split);
      heads::FinetuneConfig fin = cfg.fin;
      fin.task = tm.task;
      auto finres = heads::run_finetune(tm, *task, split.train, split.test, fin);
      row.metrics = finres.metrics;
      row.has_metrics = true;
    } else {
      token::TokenizerConfig tok;
      tok.patch_samples = cfg.patch_samples;
      tok.embed_dim = cfg.embed_dim;
      tok.F = corpus.F;
      tok.C = corpus.C;
      tok.L = corpus.Tw / cfg.patch_samples;
      enc::EncoderConfig ecfg = cfg.encoder;
      ecfg.model_dim = cfg.embed_dim;
      ecfg.seed = Rng::mix(cfg.seed, 0xE4C);
      pretrain::Model pre_model;
      pre_model.tokenizer.init(tok, Rng::mix(cfg.seed, 0x70C));
      pre_model.encoder.init(ecfg);
      pre_model.decoders.init(cfg.objectives, cfg.embed_dim, cfg.patch_samples,
                              Rng::mix(cfg.seed, 0xDEC));
      row.pre = pretrain::run_pretrain(pre_model, corpus, cfg.objectives,
                                       cfg.weights, cfg.pre, f);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<TableRow> ablate_patch(const std::vector<double>& sizes_s,
                                   const data::WindowSet& corpus,
                                   const data::WindowSet& task,
                                   const HarnessConfig& cfg) {
  std::vector<TableRow> rows;
  for (double s : sizes_s) {
    const std::int64_t w = std::llround(s * task.fs);
    if (w <= 0 || task.Tw % w != 0)
      throw ValidationError("patch size " + std::to_string(s) +
                            " s does not divide the window");
    auto run_cfg = cfg;
    run_cfg.patch_samples = w;
    auto res = train_eval(task, cfg.do_pretrain ? &corpus : nullptr, run_cfg);
    TableRow row;
    row.name = std::to_string(s) + "s";
    row.values["patch_samples"] = static_cast<double>(w);
    row.values["L"] = static_cast<double>(task.Tw / w);
    if (res.metrics.task == "classification")
      row.values["macro_f1"] = res.metrics.macro_f1;
    else
      row.values["angular_error_deg"] = res.metrics.angular_error_deg;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace exg::analysis

#include "exg/commands.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "exg/analysis.hpp"
#include "exg/checkpoint.hpp"
#include "exg/errors.hpp"

namespace exg::cmd {

namespace fs = std::filesystem;

namespace {

std::string resolve_out_dir(const config::ExperimentConfig& cfg,
                            const Options& opts) {
  std::string dir = opts.out_dir.empty() ? cfg.out_dir() : opts.out_dir;
  if (!fs::path(dir).is_absolute()) {
    if (const char* root = std::getenv("EXG_OUT_ROOT"))
      dir = (fs::path(root) / dir).string();
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output dir " + dir);
  return dir;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

void snapshot_config(const config::ExperimentConfig& cfg, const std::string& dir) {
  nlohmann::json snap = cfg.doc;
  snap["config_hash"] = cfg.hash;
  write_text(dir + "/config.json", snap.dump(2) + "\n");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

config::ExperimentConfig load_config(const Options& opts) {
  nlohmann::json user = nlohmann::json::object();
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw ValidationError("cannot open config file " + opts.config_path);
    try {
      in >> user;
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(std::string("config parse error: ") + e.what());
    }
  }
  if (opts.has_seed_override) user["seed"] = opts.seed_override;
  return config::from_json(user);
}

data::WindowSet load_manifest_windows(const config::ExperimentConfig& cfg,
                                      const std::string& manifest_path) {
  if (manifest_path.empty())
    throw ValidationError("no manifest configured (data.manifest / data.pretrain_manifest)");
  if (!fs::exists(manifest_path))
    throw IoError("manifest not found: " + manifest_path);
  auto manifest = datagen::read_manifest(manifest_path);
  return datagen::load_windows(manifest, cfg.bank(), cfg.target_fs(), cfg.window_s(),
                               cfg.doc.at("sigproc").at("preprocess").get<bool>());
}

data::WindowSet subset(const data::WindowSet& ds,
                       const std::vector<std::int64_t>& idx) {
  data::WindowSet out;
  out.F = ds.F;
  out.C = ds.C;
  out.Tw = ds.Tw;
  out.fs = ds.fs;
  out.bank = ds.bank;
  for (auto i : idx) {
    out.tensors.push_back(ds.tensors[static_cast<std::size_t>(i)]);
    out.meta.push_back(ds.meta[static_cast<std::size_t>(i)]);
    if (!ds.labels.empty()) out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
    if (!ds.gaze.empty()) out.gaze.push_back(ds.gaze[static_cast<std::size_t>(i)]);
  }
  return out;
}

token::TokenizerConfig tokenizer_for(const config::ExperimentConfig& cfg,
                                     const data::WindowSet& ds) {
  token::TokenizerConfig tok;
  tok.patch_samples = cfg.patch_samples();
  tok.embed_dim = cfg.embed_dim();
  tok.F = ds.F;
  tok.C = ds.C;
  if (ds.Tw % tok.patch_samples != 0)
    throw ValidationError("window length " + std::to_string(ds.Tw) +
                          " not divisible by patch size " +
                          std::to_string(tok.patch_samples));
  tok.L = ds.Tw / tok.patch_samples;
  return tok;
}

analysis::HarnessConfig harness_for(const config::ExperimentConfig& cfg) {
  analysis::HarnessConfig h;
  h.patch_samples = cfg.patch_samples();
  h.embed_dim = cfg.embed_dim();
  h.encoder = cfg.encoder();
  h.pre = cfg.pretrain_cfg();
  h.fin = cfg.finetune_cfg();
  h.objectives = cfg.objectives();
  h.weights = cfg.weights();
  h.split = cfg.split();
  h.seed = cfg.seed();
  return h;
}

void write_pretrain_curves(const std::string& path,
                           const pretrain::PretrainResult& res,
                           const pretrain::ObjectiveSet& objs) {
  std::string csv = "epoch,split,total,lr";
  for (auto o : objs.enabled) csv += std::string(",") + pretrain::objective_name(o);
  csv += "\n";
  for (const auto& row : res.curve) {
    csv += std::to_string(row.epoch) + "," + row.split + "," + fmt(row.loss.total) +
           "," + fmt(row.lr);
    for (auto o : objs.enabled) {
      const auto it = row.loss.task_mae.find(o);
      csv += "," + fmt(it != row.loss.task_mae.end() ? it->second : 0.0);
    }
    csv += "\n";
  }
  write_text(path, csv);
}

struct LoadedModel {
  token::TokenizerParams tokenizer;
  enc::Encoder encoder;
};

LoadedModel model_from_checkpoint(const config::ExperimentConfig& cfg,
                                  const std::string& path) {
  auto ar = ckpt::load(path);
  const auto tok_cfg = ckpt::tokenizer_config_from_json(ar.meta.at("tokenizer"));
  const auto enc_cfg = ckpt::encoder_config_from_json(ar.meta.at("encoder"));

  // compatibility: the checkpoint must have been produced under matching
  // tokenizer/encoder settings
  if (tok_cfg.patch_samples != cfg.patch_samples() ||
      tok_cfg.embed_dim != cfg.embed_dim())
    throw ValidationError(
        "checkpoint incompatible with config (tokenizer dims differ; checkpoint "
        "config hash " +
        ar.meta.value("config_hash", std::string("?")) + ")");
  const auto want_enc = cfg.encoder();
  if (enc_cfg.backbone != want_enc.backbone || enc_cfg.n_layers != want_enc.n_layers ||
      enc_cfg.model_dim != want_enc.model_dim || enc_cfg.state_dim != want_enc.state_dim)
    throw ValidationError(
        "checkpoint incompatible with config (encoder settings differ; checkpoint "
        "config hash " +
        ar.meta.value("config_hash", std::string("?")) + ")");

  LoadedModel m;
  m.tokenizer.init(tok_cfg, 0);
  m.encoder.init(enc_cfg);
  nn::ParamSet ps;
  m.tokenizer.register_into(ps);
  m.encoder.register_into(ps);
  ckpt::restore_params(ar, ps);
  return m;
}

// ---- subcommands ----------------------------------------------------------

int cmd_synth(const config::ExperimentConfig& cfg, const std::string& out) {
  const auto& synth = cfg.doc.at("synth");
  const std::int64_t subjects = synth.at("subjects").get<std::int64_t>();
  const std::int64_t sessions = synth.at("sessions").get<std::int64_t>();
  const double minutes = synth.at("minutes").get<double>();
  const std::int64_t channels = synth.at("channels").get<std::int64_t>();
  const double fs_hz = synth.at("fs").get<double>();

  // free-living corpus
  datagen::DatasetManifest corpus;
  const std::string corpus_dir = out + "/corpus";
  for (std::int64_t s = 0; s < subjects; ++s) {
    for (std::int64_t e = 0; e < sessions; ++e) {
      auto rec = datagen::synth_freeliving(
          minutes * 60.0, channels, fs_hz,
          Rng::mix(cfg.seed(), 0xF4EEULL + static_cast<std::uint64_t>(s) * 1000 +
                                   static_cast<std::uint64_t>(e)));
      char sid[16], eid[16];
      std::snprintf(sid, sizeof sid, "S%02" PRId64, s);
      std::snprintf(eid, sizeof eid, "sess%" PRId64, e);
      rec.subject_id = sid;
      rec.session_id = eid;
      const std::string name = std::string(sid) + "_" + eid;
      sigproc::write_recording(corpus_dir, name, rec);
      corpus.entries.push_back({corpus_dir + "/" + name, sid, eid, {}, {}});
    }
  }
  datagen::write_manifest(corpus_dir + "/manifest.json", corpus);

  // labeled task dataset
  auto spec = cfg.task_spec();
  const auto& tcfg = synth.at("task");
  const std::int64_t t_subjects = tcfg.at("subjects").get<std::int64_t>();
  const std::int64_t t_sessions = tcfg.at("sessions").get<std::int64_t>();
  const std::int64_t wins = tcfg.at("windows_per_session").get<std::int64_t>();
  datagen::DatasetManifest task_manifest;
  const std::string task_dir = out + "/task";
  for (std::int64_t s = 0; s < t_subjects; ++s) {
    for (std::int64_t e = 0; e < t_sessions; ++e) {
      auto task = datagen::synth_task(
          spec, wins,
          Rng::mix(cfg.seed(), 0x7A5CULL + static_cast<std::uint64_t>(s) * 1000 +
                                   static_cast<std::uint64_t>(e)));
      char sid[16], eid[16];
      std::snprintf(sid, sizeof sid, "T%02" PRId64, s);
      std::snprintf(eid, sizeof eid, "sess%" PRId64, e);
      task.recording.subject_id = sid;
      task.recording.session_id = eid;
      const std::string name = std::string(sid) + "_" + eid;
      sigproc::write_recording(task_dir, name, task.recording);
      task_manifest.entries.push_back(
          {task_dir + "/" + name, sid, eid, task.labels, task.gaze});
    }
  }
  datagen::write_manifest(task_dir + "/manifest.json", task_manifest);

  snapshot_config(cfg, out);
  std::cout << "synth: " << subjects << " subjects x " << sessions
            << " sessions free-living corpus (" << minutes << " min each), "
            << t_subjects << " x " << t_sessions << " task recordings ("
            << wins << " windows each)\n";
  std::cout << "corpus manifest: " << corpus_dir << "/manifest.json\n";
  std::cout << "task manifest:   " << task_dir << "/manifest.json\n";
  return 0;
}

int cmd_pretrain(const config::ExperimentConfig& cfg, const std::string& out) {
  auto ds = load_manifest_windows(
      cfg, cfg.doc.at("data").at("pretrain_manifest").get<std::string>());

  // LOSO: the held-out subject never enters pretraining
  auto split_spec = cfg.split();
  if (split_spec.mode == "loso" && !split_spec.loso_subject.empty()) {
    std::vector<std::int64_t> keep;
    for (std::int64_t i = 0; i < ds.size(); ++i)
      if (ds.meta[static_cast<std::size_t>(i)].subject != split_spec.loso_subject)
        keep.push_back(i);
    ds = subset(ds, keep);
    if (ds.size() == 0)
      throw ValidationError("loso exclusion removed every pretraining window");
  }

  pretrain::Model model;
  model.tokenizer.init(tokenizer_for(cfg, ds), Rng::mix(cfg.seed(), 0x70C));
  model.encoder.init(cfg.encoder());
  const auto objs = cfg.objectives();
  model.decoders.init(objs, cfg.embed_dim(), cfg.patch_samples(),
                      Rng::mix(cfg.seed(), 0xDEC));

  auto res = pretrain::run_pretrain(model, ds, objs, cfg.weights(), cfg.pretrain_cfg());

  ckpt::Archive ar;
  ar.meta["kind"] = "pretrain";
  ar.meta["config_hash"] = cfg.hash;
  ar.meta["encoder"] = ckpt::encoder_config_to_json(model.encoder.cfg);
  ar.meta["tokenizer"] = ckpt::tokenizer_config_to_json(model.tokenizer.cfg);
  nlohmann::json obj_names = nlohmann::json::array();
  for (auto o : objs.enabled) obj_names.push_back(pretrain::objective_name(o));
  ar.meta["objectives"] = obj_names;
  nn::ParamSet ps;
  model.register_into(ps);
  ckpt::put_params(ar, ps);
  ckpt::save(out + "/checkpoint.bin", ar);

  write_pretrain_curves(out + "/curves.csv", res, objs);
  snapshot_config(cfg, out);
  std::cout << "pretrain: " << res.train_idx.size() << " train / "
            << res.heldout_idx.size() << " held-out windows, " << cfg.pretrain_cfg().epochs
            << " epochs\n";
  std::cout << "held-out total loss: initial " << fmt(res.heldout_initial) << " final "
            << fmt(res.heldout_final) << "\n";
  return 0;
}

// per-class training-label cap for the low-label regime
std::vector<std::int64_t> cap_labels(const data::WindowSet& ds,
                                     const std::vector<std::int64_t>& train,
                                     std::int64_t budget) {
  if (budget <= 0 || ds.labels.empty()) return train;
  std::map<int, std::int64_t> used;
  std::vector<std::int64_t> out;
  for (auto i : train) {
    const int label = ds.labels[static_cast<std::size_t>(i)];
    if (used[label] < budget) {
      out.push_back(i);
      ++used[label];
    }
  }
  return out;
}

int cmd_finetune(const config::ExperimentConfig& cfg, const std::string& out,
                 const Options& opts) {
  auto ds = load_manifest_windows(cfg, cfg.doc.at("data").at("manifest").get<std::string>());
  if (!ds.labeled()) throw ValidationError("finetune: manifest has no labels");
  auto fin = cfg.finetune_cfg();
  const bool classification = !ds.labels.empty();
  fin.task = classification ? "classification" : "gaze";
  if (fin.task != cfg.finetune_cfg().task)
    throw ValidationError("finetune.task does not match the dataset labels");

  const bool from_scratch = cfg.doc.at("finetune").at("from_scratch").get<bool>() ||
                            opts.checkpoint.empty();

  auto split = datagen::make_splits(ds, cfg.split());
  split.train = cap_labels(ds, split.train,
                           cfg.doc.at("finetune").at("label_budget").get<std::int64_t>());

  nlohmann::json per_seed = nlohmann::json::array();
  std::vector<double> primary;
  heads::TaskModel first_model;
  heads::MetricsReport first_metrics;

  for (std::int64_t k = 0; k < std::max<std::int64_t>(1, opts.n_seeds); ++k) {
    const std::uint64_t run_seed = cfg.seed() + static_cast<std::uint64_t>(k);
    heads::TaskModel model;
    model.task = fin.task;
    if (from_scratch) {
      model.tokenizer.init(tokenizer_for(cfg, ds), Rng::mix(run_seed, 0x70C));
      auto ecfg = cfg.encoder();
      ecfg.seed = Rng::mix(run_seed, 0xE4C0DE);
      model.encoder.init(ecfg);
    } else {
      auto loaded = model_from_checkpoint(cfg, opts.checkpoint);
      if (loaded.tokenizer.cfg.F != ds.F || loaded.tokenizer.cfg.C != ds.C)
        throw ValidationError("checkpoint grid shape does not match the dataset");
      model.tokenizer = std::move(loaded.tokenizer);
      model.encoder = std::move(loaded.encoder);
    }
    if (classification) {
      int K = 0;
      for (int v : ds.labels) K = std::max(K, v + 1);
      model.cls.init(K, cfg.embed_dim(), Rng::mix(run_seed, 0xC15));
    } else {
      model.reg.init(cfg.embed_dim(), Rng::mix(run_seed, 0x4E6));
    }

    auto run_fin = fin;
    run_fin.seed = run_seed;
    auto res = heads::run_finetune(model, ds, split.train, split.test, run_fin);

    nlohmann::json row = {{"seed", run_seed}, {"n_samples", res.metrics.n_samples}};
    if (classification) {
      row["macro_f1"] = res.metrics.macro_f1;
      primary.push_back(res.metrics.macro_f1);
    } else {
      row["angular_error_deg"] = res.metrics.angular_error_deg;
      primary.push_back(res.metrics.angular_error_deg);
    }
    per_seed.push_back(row);
    if (k == 0) {
      first_model = std::move(model);
      first_metrics = res.metrics;
    }
  }

  double mean = 0.0, sd = 0.0;
  for (double v : primary) mean += v;
  mean /= static_cast<double>(primary.size());
  for (double v : primary) sd += (v - mean) * (v - mean);
  sd = primary.size() > 1 ? std::sqrt(sd / static_cast<double>(primary.size() - 1)) : 0.0;

  nlohmann::json report = {
      {"task", fin.task},
      {"config_hash", cfg.hash},
      {"metric", classification ? "macro_f1" : "angular_error_deg"},
      {"per_seed", per_seed},
      {"mean", mean},
      {"std", sd},
      {"n_train", split.train.size()},
      {"n_test", split.test.size()},
      {"from_scratch", from_scratch},
  };
  write_text(out + "/metrics.json", report.dump(2) + "\n");

  // first-seed model with everything eval needs to reproduce the metric
  ckpt::Archive ar;
  ar.meta["kind"] = "task_model";
  ar.meta["task"] = fin.task;
  ar.meta["config_hash"] = cfg.hash;
  ar.meta["encoder"] = ckpt::encoder_config_to_json(first_model.encoder.cfg);
  ar.meta["tokenizer"] = ckpt::tokenizer_config_to_json(first_model.tokenizer.cfg);
  ar.meta["manifest"] = cfg.doc.at("data").at("manifest").get<std::string>();
  ar.meta["bank_preset"] = cfg.bank_preset();
  ar.meta["test_idx"] = split.test;
  if (classification) {
    ar.meta["n_classes"] = first_model.cls.K;
    ar.meta["test_metric"] = first_metrics.macro_f1;
  } else {
    ar.meta["test_metric"] = first_metrics.angular_error_deg;
  }
  nn::ParamSet ps;
  first_model.register_all(ps);
  ckpt::put_params(ar, ps);
  ckpt::save(out + "/model.bin", ar);

  snapshot_config(cfg, out);
  std::cout << "finetune (" << fin.task << "): " << (classification ? "macro_f1 " : "angular_error_deg ")
            << fmt(mean) << " +/- " << fmt(sd) << " over " << primary.size()
            << " seed(s)\n";
  return 0;
}

heads::TaskModel task_model_from_archive(const ckpt::Archive& ar) {
  heads::TaskModel model;
  model.task = ar.meta.at("task").get<std::string>();
  model.tokenizer.init(ckpt::tokenizer_config_from_json(ar.meta.at("tokenizer")), 0);
  model.encoder.init(ckpt::encoder_config_from_json(ar.meta.at("encoder")));
  if (model.task == "classification")
    model.cls.init(ar.meta.at("n_classes").get<std::int64_t>(),
                   model.tokenizer.cfg.embed_dim, 0);
  else
    model.reg.init(model.tokenizer.cfg.embed_dim, 0);
  nn::ParamSet ps;
  model.register_all(ps);
  ckpt::restore_params(ar, ps);
  return model;
}

int cmd_eval(const config::ExperimentConfig& cfg, const std::string& out,
             const Options& opts) {
  if (opts.checkpoint.empty())
    throw ValidationError("eval requires --checkpoint (a trained task model)");
  auto ar = ckpt::load(opts.checkpoint);
  if (ar.meta.value("kind", std::string()) != "task_model")
    throw ValidationError("eval expects a task model checkpoint");
  auto model = task_model_from_archive(ar);

  auto manifest = datagen::read_manifest(ar.meta.at("manifest").get<std::string>());
  auto bank = analysis::band_preset(ar.meta.at("bank_preset").get<std::string>()).bank;
  auto ds = datagen::load_windows(manifest, bank, cfg.target_fs(), cfg.window_s(),
                                  cfg.doc.at("sigproc").at("preprocess").get<bool>());
  const auto test_idx = ar.meta.at("test_idx").get<std::vector<std::int64_t>>();
  auto metrics = heads::evaluate(model, ds, test_idx);

  const double value = model.task == "classification" ? metrics.macro_f1
                                                      : metrics.angular_error_deg;
  nlohmann::json report = {
      {"task", model.task},
      {"config_hash", cfg.hash},
      {"metric", model.task == "classification" ? "macro_f1" : "angular_error_deg"},
      {"value", value},
      {"stored_test_metric", ar.meta.at("test_metric").get<double>()},
      {"n_samples", metrics.n_samples},
  };
  write_text(out + "/eval_metrics.json", report.dump(2) + "\n");
  snapshot_config(cfg, out);
  std::cout << "eval: " << fmt(value) << " (stored "
            << fmt(ar.meta.at("test_metric").get<double>()) << ")\n";
  return 0;
}

int cmd_ablate_bands(const config::ExperimentConfig& cfg, const std::string& out) {
  const std::string manifest_path = cfg.doc.at("data").at("manifest").get<std::string>();
  if (!fs::exists(manifest_path)) throw IoError("manifest not found: " + manifest_path);
  auto manifest = datagen::read_manifest(manifest_path);
  std::vector<std::string> presets;
  for (const auto& p : cfg.doc.at("analysis").at("presets"))
    presets.push_back(p.get<std::string>());
  auto rows = analysis::ablate_bands(manifest, presets, harness_for(cfg));

  std::string csv = "preset,n_bands,n_tokens,macro_f1,angular_error_deg\n";
  for (const auto& row : rows) {
    csv += row.name + "," + fmt(row.values.at("n_bands")) + "," +
           fmt(row.values.at("n_tokens")) + ",";
    csv += (row.values.count("macro_f1") ? fmt(row.values.at("macro_f1")) : "") + std::string(",");
    csv += (row.values.count("angular_error_deg") ? fmt(row.values.at("angular_error_deg")) : "");
    csv += "\n";
  }
  write_text(out + "/bands.csv", csv);
  snapshot_config(cfg, out);
  std::cout << "ablate-bands: " << rows.size() << " rows -> " << out << "/bands.csv\n";
  return 0;
}

int cmd_ablate_objectives(const config::ExperimentConfig& cfg, const std::string& out) {
  auto corpus = load_manifest_windows(
      cfg, cfg.doc.at("data").at("pretrain_manifest").get<std::string>());
  auto task = load_manifest_windows(cfg, cfg.doc.at("data").at("manifest").get<std::string>());
  auto rows = analysis::ablate_objectives(corpus, task, harness_for(cfg));

  std::string csv = "row,macro_f1,angular_error_deg";
  for (auto o : pretrain::kAllObjectives)
    csv += std::string(",loss_") + pretrain::objective_name(o);
  csv += "\n";
  for (const auto& row : rows) {
    csv += row.name + ",";
    csv += (row.values.count("macro_f1") ? fmt(row.values.at("macro_f1")) : "") + std::string(",");
    csv += (row.values.count("angular_error_deg") ? fmt(row.values.at("angular_error_deg")) : "");
    for (auto o : pretrain::kAllObjectives) {
      const std::string key = std::string("loss_") + pretrain::objective_name(o);
      csv += "," + (row.values.count(key) ? fmt(row.values.at(key)) : std::string(""));
    }
    csv += "\n";
  }
  write_text(out + "/objectives.csv", csv);
  snapshot_config(cfg, out);
  std::cout << "ablate-objectives: " << rows.size() << " rows -> " << out
            << "/objectives.csv\n";
  return 0;
}

int cmd_ablate_patch(const config::ExperimentConfig& cfg, const std::string& out) {
  auto corpus_path = cfg.doc.at("data").at("pretrain_manifest").get<std::string>();
  data::WindowSet corpus;
  if (!corpus_path.empty()) corpus = load_manifest_windows(cfg, corpus_path);
  auto task = load_manifest_windows(cfg, cfg.doc.at("data").at("manifest").get<std::string>());
  std::vector<double> sizes;
  for (const auto& s : cfg.doc.at("analysis").at("patch_sizes"))
    sizes.push_back(s.get<double>());
  auto h = harness_for(cfg);
  h.do_pretrain = corpus.size() > 0;
  auto rows = analysis::ablate_patch(sizes, corpus, task, h);

  std::string csv = "patch_s,patch_samples,L,macro_f1,angular_error_deg\n";
  for (const auto& row : rows) {
    csv += row.name + "," + fmt(row.values.at("patch_samples")) + "," +
           fmt(row.values.at("L")) + ",";
    csv += (row.values.count("macro_f1") ? fmt(row.values.at("macro_f1")) : "") + std::string(",");
    csv += (row.values.count("angular_error_deg") ? fmt(row.values.at("angular_error_deg")) : "");
    csv += "\n";
  }
  write_text(out + "/patch.csv", csv);
  snapshot_config(cfg, out);
  std::cout << "ablate-patch: " << rows.size() << " rows -> " << out << "/patch.csv\n";
  return 0;
}

int cmd_scale_study(const config::ExperimentConfig& cfg, const std::string& out) {
  auto corpus = load_manifest_windows(
      cfg, cfg.doc.at("data").at("pretrain_manifest").get<std::string>());
  const std::string task_path = cfg.doc.at("data").at("manifest").get<std::string>();
  data::WindowSet task;
  const bool has_task = !task_path.empty() && fs::exists(task_path);
  if (has_task) task = load_manifest_windows(cfg, task_path);

  std::vector<double> fractions;
  for (const auto& f : cfg.doc.at("analysis").at("fractions"))
    fractions.push_back(f.get<double>());
  auto rows = analysis::scale_study(fractions, corpus, has_task ? &task : nullptr,
                                    harness_for(cfg));

  std::string csv = "fraction,epoch,split,total\n";
  for (const auto& row : rows)
    for (const auto& er : row.pre.curve)
      csv += fmt(row.fraction) + "," + std::to_string(er.epoch) + "," + er.split +
             "," + fmt(er.loss.total) + "\n";
  write_text(out + "/scale_curves.csv", csv);

  if (has_task) {
    std::string dcsv = "fraction,macro_f1,angular_error_deg\n";
    for (const auto& row : rows) {
      dcsv += fmt(row.fraction) + ",";
      if (row.has_metrics && row.metrics.task == "classification")
        dcsv += fmt(row.metrics.macro_f1);
      dcsv += ",";
      if (row.has_metrics && row.metrics.task == "gaze")
        dcsv += fmt(row.metrics.angular_error_deg);
      dcsv += "\n";
    }
    write_text(out + "/downstream.csv", dcsv);
  }
  snapshot_config(cfg, out);
  std::cout << "scale-study: " << rows.size() << " fractions -> " << out
            << "/scale_curves.csv\n";
  return 0;
}

int cmd_saliency(const config::ExperimentConfig& cfg, const std::string& out,
                 const Options& opts) {
  if (opts.checkpoint.empty())
    throw ValidationError("saliency requires --checkpoint (a trained task model)");
  auto ar = ckpt::load(opts.checkpoint);
  if (ar.meta.value("kind", std::string()) != "task_model")
    throw ValidationError("saliency expects a task model checkpoint");
  auto model = task_model_from_archive(ar);

  auto manifest = datagen::read_manifest(ar.meta.at("manifest").get<std::string>());
  auto bank = analysis::band_preset(ar.meta.at("bank_preset").get<std::string>()).bank;
  auto ds = datagen::load_windows(manifest, bank, cfg.target_fs(), cfg.window_s(),
                                  cfg.doc.at("sigproc").at("preprocess").get<bool>());
  auto test_idx = ar.meta.at("test_idx").get<std::vector<std::int64_t>>();
  const std::int64_t cap =
      cfg.doc.at("analysis").at("saliency_windows").get<std::int64_t>();
  if (cap > 0 && static_cast<std::int64_t>(test_idx.size()) > cap)
    test_idx.resize(static_cast<std::size_t>(cap));

  std::vector<double> mean_mass(static_cast<std::size_t>(ds.F), 0.0);
  for (auto wi : test_idx) {
    auto map = analysis::saliency(model, ds.window(wi));
    for (std::size_t f = 0; f < mean_mass.size(); ++f)
      mean_mass[f] += map.band_mass[f] / static_cast<double>(test_idx.size());
  }

  std::string csv = "band_index,band_name,mass\n";
  for (std::size_t f = 0; f < mean_mass.size(); ++f)
    csv += std::to_string(f) + "," + ds.bank.bands[f].name + "," + fmt(mean_mass[f]) + "\n";
  write_text(out + "/saliency.csv", csv);
  snapshot_config(cfg, out);
  std::cout << "saliency: averaged over " << test_idx.size() << " windows -> " << out
            << "/saliency.csv\n";
  return 0;
}

}  // namespace

int run_command(const std::string& name, const Options& opts) {
  try {
    auto cfg = load_config(opts);
    const std::string out = resolve_out_dir(cfg, opts);
    if (name == "synth") return cmd_synth(cfg, out);
    if (name == "pretrain") return cmd_pretrain(cfg, out);
    if (name == "finetune") return cmd_finetune(cfg, out, opts);
    if (name == "eval") return cmd_eval(cfg, out, opts);
    if (name == "ablate-bands") return cmd_ablate_bands(cfg, out);
    if (name == "ablate-objectives") return cmd_ablate_objectives(cfg, out);
    if (name == "ablate-patch") return cmd_ablate_patch(cfg, out);
    if (name == "scale-study") return cmd_scale_study(cfg, out);
    if (name == "saliency") return cmd_saliency(cfg, out, opts);
    std::cerr << "unknown command '" << name << "'\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace exg::cmd

#include "exg/config.hpp"

#include <fstream>

#include "exg/analysis.hpp"
#include "exg/errors.hpp"

namespace exg::config {

nlohmann::json default_config() {
  return nlohmann::json{
      {"seed", 1},
      {"out_dir", "out"},
      {"data",
       {{"manifest", ""},            // labeled task dataset
        {"pretrain_manifest", ""}}}, // free-living corpus
      {"sigproc",
       {{"target_fs", 200.0}, {"window_s", 4.0}, {"preprocess", true}}},
      {"bank", {{"preset", "12-band"}}},
      {"tokenizer", {{"patch_samples", 100}, {"embed_dim", 64}}},
      {"mask", {{"ratio", 0.5}, {"mode", "uniform-token"}}},
      {"encoder",
       {{"backbone", "bi-ssm"},
        {"n_layers", 8},
        {"state_dim", 16},
        {"n_heads", 4},
        {"ffn_dim", 0}}},
      {"pretrain",
       {{"epochs", 10},
        {"batch_size", 256},
        {"lr_start", 0.01},
        {"lr_end", 0.001},
        {"weight_decay", 0.01},
        {"holdout_frac", 0.2},
        {"noise_sigma", 0.05},
        {"mr_masked_only", false},
        {"clip_norm", 1.0},
        {"objectives", {"AE", "MR", "A", "P", "MA", "MP"}},
        {"lambda",
         {{"AE", 2.0}, {"MR", 2.0}, {"A", 1.0}, {"P", 1.0}, {"MA", 1.0}, {"MP", 1.0}}}}},
      {"finetune",
       {{"task", "classification"},
        {"epochs", 30},
        {"batch_size", 8},
        {"lr_start", 0.001},
        {"lr_end", 0.00001},
        {"freeze_encoder", false},
        {"from_scratch", false},
        {"noise_sigma", 0.0},
        {"label_budget", 0}}},
      {"split", {{"mode", "within-session"}, {"seed", 0}, {"loso_subject", ""}}},
      {"synth",
       {{"subjects", 30},
        {"sessions", 2},
        {"minutes", 2.0},
        {"channels", 4},
        {"fs", 200.0},
        {"task",
         {{"kind", "classification"},
          {"classes", nlohmann::json::array({
                          nlohmann::json{{"label", "alpha"}, {"band", 2}, {"ratio", 4.0}},
                          nlohmann::json{{"label", "beta"}, {"band", 3}, {"ratio", 4.0}},
                      })},
          {"noise_floor", 1.0},
          {"subjects", 4},
          {"sessions", 2},
          {"windows_per_session", 30},
          {"gaze_carrier_hz", 0.75},
          {"gaze_scale", 0.08},
          {"gaze_range_deg", 15.0}}}}},
      {"analysis",
       {{"fractions", {0.25, 0.5, 1.0}},
        {"patch_sizes", {0.25, 0.5, 1.0, 2.0}},
        {"presets", {"1-band", "2-band", "4-band", "12-band"}},
        {"saliency_windows", 32}}},
  };
}

namespace {

std::string type_name(const nlohmann::json& v) {
  if (v.is_object()) return "object";
  if (v.is_array()) return "array";
  if (v.is_string()) return "string";
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  return "null";
}

void validate_node(const nlohmann::json& schema, const nlohmann::json& user,
                   const std::string& path) {
  if (schema.is_object()) {
    if (!user.is_object())
      throw ValidationError("config key '" + path + "' must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
      if (!schema.contains(it.key()))
        throw ValidationError("unknown config key '" + path +
                              (path.empty() ? "" : ".") + it.key() + "'");
      validate_node(schema.at(it.key()), it.value(),
                    path.empty() ? it.key() : path + "." + it.key());
    }
    return;
  }
  if (schema.is_array()) {
    if (!user.is_array())
      throw ValidationError("config key '" + path + "' must be an array");
    if (!schema.empty() && !user.empty())
      for (std::size_t i = 0; i < user.size(); ++i)
        validate_node(schema.at(0), user.at(i), path + "[" + std::to_string(i) + "]");
    return;
  }
  // scalar: types must agree (ints may stand in for doubles)
  const bool ok = (schema.is_number() && user.is_number()) ||
                  (schema.is_string() && user.is_string()) ||
                  (schema.is_boolean() && user.is_boolean());
  if (!ok)
    throw ValidationError("config key '" + path + "' expects " + type_name(schema) +
                          ", got " + type_name(user));
}

void merge_into(nlohmann::json& base, const nlohmann::json& user) {
  if (!user.is_object()) {
    base = user;
    return;
  }
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (base.contains(it.key()) && base.at(it.key()).is_object() &&
        it.value().is_object())
      merge_into(base.at(it.key()), it.value());
    else
      base[it.key()] = it.value();
  }
}

void semantic_checks(const nlohmann::json& doc) {
  const double ratio = doc.at("mask").at("ratio").get<double>();
  if (ratio < 0.0 || ratio > 1.0)
    throw ValidationError("mask.ratio must lie in [0, 1]");
  const std::string mode = doc.at("mask").at("mode").get<std::string>();
  if (mode != "uniform-token" && mode != "axis-structured")
    throw ValidationError("mask.mode must be uniform-token or axis-structured");
  const std::string backbone = doc.at("encoder").at("backbone").get<std::string>();
  if (backbone != "bi-ssm" && backbone != "attention")
    throw ValidationError("encoder.backbone must be bi-ssm or attention");
  analysis::band_preset(doc.at("bank").at("preset").get<std::string>());

  for (const auto& name : doc.at("pretrain").at("objectives"))
    if (!pretrain::objective_from_name(name.get<std::string>()))
      throw ValidationError("unknown objective '" + name.get<std::string>() + "'");

  const auto& task = doc.at("synth").at("task");
  const std::string kind = task.at("kind").get<std::string>();
  if (kind != "classification" && kind != "gaze")
    throw ValidationError("synth.task.kind must be classification or gaze");
  const auto bank = sigproc::default_filter_bank();
  for (const auto& cls : task.at("classes")) {
    const int band = cls.at("band").get<int>();
    if (band < 0 || band >= bank.size())
      throw ValidationError("synth.task class band index " + std::to_string(band) +
                            " outside the default bank");
    if (cls.at("ratio").get<double>() < 1.0)
      throw ValidationError("synth.task class ratio must be >= 1");
  }
  const std::string split_mode = doc.at("split").at("mode").get<std::string>();
  if (split_mode != "within-session" && split_mode != "cross-session" &&
      split_mode != "cross-subject" && split_mode != "loso")
    throw ValidationError("unknown split.mode '" + split_mode + "'");
}

}  // namespace

ExperimentConfig from_json(const nlohmann::json& user) {
  auto schema = default_config();
  validate_node(schema, user, "");
  auto merged = schema;
  merge_into(merged, user);
  semantic_checks(merged);
  ExperimentConfig cfg;
  cfg.doc = std::move(merged);
  cfg.hash = config_hash(cfg.doc);
  return cfg;
}

ExperimentConfig load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  nlohmann::json user;
  try {
    in >> user;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  return from_json(user);
}

std::string config_hash(const nlohmann::json& doc) {
  const std::string canon = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

sigproc::FilterBank ExperimentConfig::bank() const {
  return analysis::band_preset(doc.at("bank").at("preset").get<std::string>()).bank;
}

enc::EncoderConfig ExperimentConfig::encoder() const {
  enc::EncoderConfig cfg;
  const auto& e = doc.at("encoder");
  cfg.backbone = e.at("backbone").get<std::string>();
  cfg.n_layers = e.at("n_layers").get<std::int64_t>();
  cfg.model_dim = embed_dim();
  cfg.state_dim = e.at("state_dim").get<std::int64_t>();
  cfg.n_heads = e.at("n_heads").get<std::int64_t>();
  cfg.ffn_dim = e.at("ffn_dim").get<std::int64_t>();
  cfg.seed = Rng::mix(seed(), 0xE4C0DE);
  return cfg;
}

pretrain::PretrainConfig ExperimentConfig::pretrain_cfg() const {
  pretrain::PretrainConfig cfg;
  const auto& p = doc.at("pretrain");
  cfg.epochs = p.at("epochs").get<std::int64_t>();
  cfg.batch_size = p.at("batch_size").get<std::int64_t>();
  cfg.lr_start = p.at("lr_start").get<double>();
  cfg.lr_end = p.at("lr_end").get<double>();
  cfg.weight_decay = p.at("weight_decay").get<double>();
  cfg.holdout_frac = p.at("holdout_frac").get<double>();
  cfg.noise_sigma = p.at("noise_sigma").get<double>();
  cfg.mr_masked_only = p.at("mr_masked_only").get<bool>();
  cfg.clip_norm = p.at("clip_norm").get<double>();
  cfg.mask_ratio = doc.at("mask").at("ratio").get<double>();
  cfg.mask_mode = doc.at("mask").at("mode").get<std::string>() == "axis-structured"
                      ? token::MaskSpec::Mode::kAxisStructured
                      : token::MaskSpec::Mode::kUniformToken;
  cfg.seed = seed();
  return cfg;
}

pretrain::ObjectiveSet ExperimentConfig::objectives() const {
  std::vector<pretrain::Objective> objs;
  for (const auto& name : doc.at("pretrain").at("objectives"))
    objs.push_back(*pretrain::objective_from_name(name.get<std::string>()));
  auto set = pretrain::ObjectiveSet::of(objs);
  set.validate();
  return set;
}

pretrain::LossWeights ExperimentConfig::weights() const {
  auto w = pretrain::LossWeights::defaults();
  for (const auto& [key, value] : doc.at("pretrain").at("lambda").items()) {
    auto o = pretrain::objective_from_name(key);
    if (!o) throw ValidationError("lambda for unknown objective '" + key + "'");
    w.lambda[*o] = value.get<double>();
  }
  return w;
}

heads::FinetuneConfig ExperimentConfig::finetune_cfg() const {
  heads::FinetuneConfig cfg;
  const auto& f = doc.at("finetune");
  cfg.task = f.at("task").get<std::string>();
  cfg.epochs = f.at("epochs").get<std::int64_t>();
  cfg.batch_size = f.at("batch_size").get<std::int64_t>();
  cfg.lr_start = f.at("lr_start").get<double>();
  cfg.lr_end = f.at("lr_end").get<double>();
  cfg.freeze_encoder = f.at("freeze_encoder").get<bool>();
  cfg.noise_sigma = f.at("noise_sigma").get<double>();
  cfg.seed = seed();
  return cfg;
}

datagen::SplitSpec ExperimentConfig::split() const {
  datagen::SplitSpec spec;
  const auto& s = doc.at("split");
  spec.mode = s.at("mode").get<std::string>();
  spec.seed = s.at("seed").get<std::uint64_t>();
  spec.loso_subject = s.at("loso_subject").get<std::string>();
  return spec;
}

datagen::SyntheticTaskSpec ExperimentConfig::task_spec() const {
  datagen::SyntheticTaskSpec spec;
  const auto& t = doc.at("synth").at("task");
  spec.kind = t.at("kind").get<std::string>();
  for (const auto& cls : t.at("classes"))
    spec.classes.push_back({cls.at("label").get<std::string>(),
                            cls.at("band").get<int>(),
                            cls.at("ratio").get<double>()});
  spec.noise_floor = t.at("noise_floor").get<double>();
  spec.channels = doc.at("synth").at("channels").get<std::int64_t>();
  spec.fs = doc.at("synth").at("fs").get<double>();
  spec.window_s = window_s();
  spec.gaze_carrier_hz = t.at("gaze_carrier_hz").get<double>();
  spec.gaze_scale = t.at("gaze_scale").get<double>();
  spec.gaze_range_deg = t.at("gaze_range_deg").get<double>();
  return spec;
}

}  // namespace exg::config

#pragma once

#include <string>

#include <json.hpp>

#include "exg/datagen.hpp"
#include "exg/encoder.hpp"
#include "exg/heads.hpp"
#include "exg/pretrain.hpp"
#include "exg/sigproc.hpp"
#include "exg/tokenize.hpp"

namespace exg::config {

// Schema-validated experiment document. Unknown keys are rejected; values
// must match the default document's types. The hash covers the fully merged
// document, so identical hashes mean identical effective settings.
struct ExperimentConfig {
  nlohmann::json doc;
  std::string hash;

  std::uint64_t seed() const { return doc.at("seed").get<std::uint64_t>(); }
  std::string out_dir() const { return doc.at("out_dir").get<std::string>(); }

  sigproc::FilterBank bank() const;
  std::string bank_preset() const { return doc.at("bank").at("preset"); }
  enc::EncoderConfig encoder() const;
  pretrain::PretrainConfig pretrain_cfg() const;
  pretrain::ObjectiveSet objectives() const;
  pretrain::LossWeights weights() const;
  heads::FinetuneConfig finetune_cfg() const;
  datagen::SplitSpec split() const;
  datagen::SyntheticTaskSpec task_spec() const;

  std::int64_t patch_samples() const {
    return doc.at("tokenizer").at("patch_samples").get<std::int64_t>();
  }
  std::int64_t embed_dim() const {
    return doc.at("tokenizer").at("embed_dim").get<std::int64_t>();
  }
  double target_fs() const { return doc.at("sigproc").at("target_fs").get<double>(); }
  double window_s() const { return doc.at("sigproc").at("window_s").get<double>(); }
};

nlohmann::json default_config();

// Validates against the schema (unknown keys, type mismatches, semantic
// checks) and merges over the defaults.
ExperimentConfig from_json(const nlohmann::json& user);
ExperimentConfig load_file(const std::string& path);

std::string config_hash(const nlohmann::json& doc);  // FNV-1a 64, hex

}  // namespace exg::config

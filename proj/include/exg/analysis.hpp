#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "exg/datagen.hpp"
#include "exg/heads.hpp"
#include "exg/pretrain.hpp"

namespace exg::analysis {

// Per-band attribution mass (sums to 1) plus the full token-level map.
struct SaliencyMap {
  std::vector<double> band_mass;  // [F]
  Tensor full;                    // [F, C, L]
};

// Gradient-times-input attribution on token embeddings for the model's
// predicted class score (or the regression output norm). Degenerate
// all-zero gradients fall back to the uniform map.
SaliencyMap saliency(heads::TaskModel& model, const sigproc::BandStack& window);

struct BandPreset {
  std::string name;
  sigproc::FilterBank bank;
};

// "1-band", "2-band", "4-band", "12-band"
BandPreset band_preset(const std::string& name);
std::vector<std::string> preset_names();

// Shared machinery for the ablation/scale harnesses.
struct HarnessConfig {
  std::int64_t patch_samples = 100;
  std::int64_t embed_dim = 64;
  enc::EncoderConfig encoder;  // model_dim overridden to embed_dim
  pretrain::PretrainConfig pre;
  heads::FinetuneConfig fin;
  pretrain::ObjectiveSet objectives = pretrain::ObjectiveSet::all();
  pretrain::LossWeights weights = pretrain::LossWeights::defaults();
  datagen::SplitSpec split;
  bool do_pretrain = true;
  std::uint64_t seed = 1;
};

// Builds a task model (optionally pretrained on `corpus`), fine-tunes on the
// split of `task_ds`, and evaluates. The task kind comes from the dataset's
// labels.
struct TrainEvalResult {
  heads::MetricsReport metrics;
  pretrain::PretrainResult pretrain;  // empty when do_pretrain = false
  heads::FinetuneResult finetune;
  heads::TaskModel model;
};

TrainEvalResult train_eval(const data::WindowSet& task_ds,
                           const data::WindowSet* corpus, const HarnessConfig& cfg);

struct TableRow {
  std::string name;
  std::map<std::string, double> values;
};

// One row per preset; recordings are re-decomposed with each preset's bank.
std::vector<TableRow> ablate_bands(const datagen::DatasetManifest& task_manifest,
                                   const std::vector<std::string>& presets,
                                   const HarnessConfig& cfg);

// Seven rows: "full" plus leave-one-out over the six objectives.
std::vector<TableRow> ablate_objectives(const data::WindowSet& corpus,
                                        const data::WindowSet& task,
                                        const HarnessConfig& cfg);

struct ScaleRow {
  double fraction = 1.0;
  pretrain::PretrainResult pre;
  bool has_metrics = false;
  heads::MetricsReport metrics;
};

// One pretraining run per fraction over a shared held-out set; optional
// downstream fine-tune per fraction when a task set is given.
std::vector<ScaleRow> scale_study(const std::vector<double>& fractions,
                                  const data::WindowSet& corpus,
                                  const data::WindowSet* task,
                                  const HarnessConfig& cfg);

// One row per patch size (seconds); window length must be divisible.
std::vector<TableRow> ablate_patch(const std::vector<double>& sizes_s,
                                   const data::WindowSet& corpus,
                                   const data::WindowSet& task,
                                   const HarnessConfig& cfg);

}  // namespace exg::analysis

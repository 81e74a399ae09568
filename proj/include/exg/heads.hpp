#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "exg/dataset.hpp"
#include "exg/nn.hpp"
#include "exg/pretrain.hpp"

namespace exg::heads {

// mean over tokens, [N, d] -> [d]
std::vector<double> pool_mean(const Tensor& latents);

struct ClassifierHead {
  nn::Linear linear;  // [K, d]
  std::int64_t K = 0;
  void init(std::int64_t n_classes, std::int64_t d, std::uint64_t seed);
  void register_into(nn::ParamSet& ps) { linear.register_into(ps); }
};

struct RegressorHead {
  nn::Linear linear;  // [2, d], applied per token
  void init(std::int64_t d, std::uint64_t seed);
  void register_into(nn::ParamSet& ps) { linear.register_into(ps); }
};

// logits over classes from the pooled latent
std::vector<double> classify(const Tensor& latents, const ClassifierHead& head);
// lowest index wins ties
int argmax_class(const std::vector<double>& logits);

// per-token 2D outputs averaged into the final angle prediction (degrees)
std::array<double, 2> regress(const Tensor& latents, const RegressorHead& head);

double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels);

double angular_error(const std::array<double, 2>& pred,
                     const std::array<double, 2>& gt);

struct MetricsReport {
  std::string task;  // "classification" | "gaze"
  double macro_f1 = 0.0;
  double angular_error_deg = 0.0;
  std::vector<double> per_class_precision, per_class_recall;
  std::int64_t n_samples = 0;
};

MetricsReport classification_report(const std::vector<int>& preds,
                                    const std::vector<int>& labels);

struct FinetuneConfig {
  std::string task = "classification";  // | "gaze"
  std::int64_t epochs = 30;
  std::int64_t batch_size = 8;  // 10 for gaze
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  bool freeze_encoder = false;
  double noise_sigma = 0.0;
  double clip_norm = 1.0;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
};

// Tokenizer + encoder + task head.
struct TaskModel {
  token::TokenizerParams tokenizer;
  enc::Encoder encoder;
  ClassifierHead cls;
  RegressorHead reg;
  std::string task;

  void register_all(nn::ParamSet& ps) {
    tokenizer.register_into(ps);
    encoder.register_into(ps);
    if (task == "classification") cls.register_into(ps);
    else reg.register_into(ps);
  }
  void register_trainable(nn::ParamSet& ps, bool freeze_encoder) {
    if (!freeze_encoder) {
      tokenizer.register_into(ps);
      encoder.register_into(ps);
    }
    if (task == "classification") cls.register_into(ps);
    else reg.register_into(ps);
  }
};

struct FinetuneResult {
  MetricsReport metrics;
  std::vector<std::int64_t> train_idx, test_idx;
  std::vector<double> train_loss_curve;  // per epoch
};

// Trains the head (and the backbone unless frozen) on the given split and
// evaluates on the test windows.
FinetuneResult run_finetune(TaskModel& model, const data::WindowSet& ds,
                            const std::vector<std::int64_t>& train_idx,
                            const std::vector<std::int64_t>& test_idx,
                            const FinetuneConfig& cfg);

// Evaluation only: predictions + metrics on the given windows.
MetricsReport evaluate(TaskModel& model, const data::WindowSet& ds,
                       const std::vector<std::int64_t>& idx);

}  // namespace exg::heads

#include "exg/heads.hpp"

#include <algorithm>
#include <cmath>

#include "exg/errors.hpp"
#include "exg/linalg.hpp"

namespace exg::heads {

std::vector<double> pool_mean(const Tensor& latents) {
  const std::int64_t N = latents.shape[0], d = latents.shape[1];
  if (N < 1) throw ValidationError("pool_mean: empty sequence");
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  const auto& K = kernels::active();
  for (std::int64_t i = 0; i < N; ++i)
    K.vadd(latents.ptr() + i * d, out.data(), static_cast<std::size_t>(d));
  const double inv = 1.0 / static_cast<double>(N);
  K.scal(inv, out.data(), static_cast<std::size_t>(d));
  return out;
}

void ClassifierHead::init(std::int64_t n_classes, std::int64_t d, std::uint64_t seed) {
  if (n_classes < 2) throw ValidationError("classifier needs >= 2 classes");
  K = n_classes;
  Rng rng(seed);
  linear.init("head.cls", n_classes, d, true, rng);
}

void RegressorHead::init(std::int64_t d, std::uint64_t seed) {
  Rng rng(seed);
  linear.init("head.reg", 2, d, true, rng);
}

std::vector<double> classify(const Tensor& latents, const ClassifierHead& head) {
  auto pooled = pool_mean(latents);
  std::vector<double> logits(static_cast<std::size_t>(head.K));
  head.linear.forward(pooled.data(), logits.data(), 1);
  return logits;
}

int argmax_class(const std::vector<double>& logits) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(logits.size()); ++i)
    if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)])
      best = i;
  return best;
}

std::array<double, 2> regress(const Tensor& latents, const RegressorHead& head) {
  const std::int64_t N = latents.shape[0];
  Tensor per_token({N, 2});
  head.linear.forward(latents.ptr(), per_token.ptr(), N);
  std::array<double, 2> out = {0.0, 0.0};
  for (std::int64_t i = 0; i < N; ++i) {
    out[0] += per_token.at2(i, 0);
    out[1] += per_token.at2(i, 1);
  }
  out[0] /= static_cast<double>(N);
  out[1] /= static_cast<double>(N);
  return out;
}

double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels) {
  return classification_report(preds, labels).macro_f1;
}

MetricsReport classification_report(const std::vector<int>& preds,
                                    const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw ValidationError("macro_f1: empty or mismatched inputs");
  int K = 0;
  for (int v : labels) K = std::max(K, v + 1);
  for (int v : preds) K = std::max(K, v + 1);

  MetricsReport rep;
  rep.task = "classification";
  rep.n_samples = static_cast<std::int64_t>(labels.size());
  std::vector<std::int64_t> tp(static_cast<std::size_t>(K), 0),
      fp(static_cast<std::size_t>(K), 0), fn(static_cast<std::size_t>(K), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (preds[i] == labels[i]) ++tp[static_cast<std::size_t>(labels[i])];
    else {
      ++fp[static_cast<std::size_t>(preds[i])];
      ++fn[static_cast<std::size_t>(labels[i])];
    }
  }
  double f1_sum = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double prec = (tp[i] + fp[i]) ? static_cast<double>(tp[i]) /
                                              static_cast<double>(tp[i] + fp[i])
                                        : 0.0;
    const double rec = (tp[i] + fn[i]) ? static_cast<double>(tp[i]) /
                                             static_cast<double>(tp[i] + fn[i])
                                       : 0.0;
    rep.per_class_precision.push_back(prec);
    rep.per_class_recall.push_back(rec);
    f1_sum += (prec + rec > 0.0) ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  rep.macro_f1 = f1_sum / static_cast<double>(K);
  return rep;
}

double angular_error(const std::array<double, 2>& pred,
                     const std::array<double, 2>& gt) {
  return std::hypot(pred[0] - gt[0], pred[1] - gt[1]);
}

namespace {

// softmax cross-entropy; returns loss, fills dlogits
double ce_loss(const std::vector<double>& logits, int label,
               std::vector<double>& dlogits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double logz = std::log(z) + mx;
  dlogits.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k)
    dlogits[k] = std::exp(logits[k] - logz);
  dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return logz - logits[static_cast<std::size_t>(label)];
}

}  // namespace

FinetuneResult run_finetune(TaskModel& model, const data::WindowSet& ds,
                            const std::vector<std::int64_t>& train_idx,
                            const std::vector<std::int64_t>& test_idx,
                            const FinetuneConfig& cfg) {
  if (!ds.labeled()) throw ValidationError("finetune: dataset has no labels");
  const bool classification = cfg.task == "classification";
  if (classification && ds.labels.empty())
    throw ValidationError("finetune: task/label mismatch (need class labels)");
  if (!classification && ds.gaze.empty())
    throw ValidationError("finetune: task/label mismatch (need gaze labels)");

  const std::int64_t d = model.tokenizer.cfg.embed_dim;
  nn::ParamSet trainable;
  model.register_trainable(trainable, cfg.freeze_encoder);
  nn::AdamW opt;
  opt.weight_decay = cfg.weight_decay;

  FinetuneResult res;
  res.train_idx = train_idx;
  res.test_idx = test_idx;

  const std::int64_t batches_per_epoch =
      (static_cast<std::int64_t>(train_idx.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  const std::int64_t total_steps = cfg.epochs * batches_per_epoch;
  std::int64_t step = 0;

  enc::Trace trace;
  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = train_idx;
    Rng erng(Rng::mix(cfg.seed, 0xF1E0 + static_cast<std::uint64_t>(epoch)));
    erng.shuffle(order);

    double epoch_loss = 0.0;
    std::int64_t n_seen = 0;
    for (std::size_t b0 = 0; b0 < order.size();
         b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 =
          std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      trainable.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const std::int64_t wi = order[k];
        auto win = ds.window(wi);
        if (cfg.noise_sigma > 0.0)
          win = sigproc::augment_noise(
              win, cfg.noise_sigma,
              Rng::mix(cfg.seed, 0xAB000ULL + static_cast<std::uint64_t>(epoch) * 997ULL +
                                     static_cast<std::uint64_t>(wi)));
        auto grid = token::segment(win, model.tokenizer.cfg.patch_samples);
        auto tokens = token::embed(grid, model.tokenizer);
        const std::int64_t N = tokens.n_tokens();
        Tensor z({N, d});
        model.encoder.forward(tokens.embeddings.ptr(), z.ptr(), N,
                              cfg.freeze_encoder ? nullptr : &trace);

        Tensor dz({N, d});
        dz.fill(0.0);
        double loss = 0.0;
        if (classification) {
          auto pooled = pool_mean(z);
          std::vector<double> logits(static_cast<std::size_t>(model.cls.K));
          model.cls.linear.forward(pooled.data(), logits.data(), 1);
          std::vector<double> dlogits;
          loss = ce_loss(logits, ds.labels[static_cast<std::size_t>(wi)], dlogits);
          std::vector<double> dpooled(static_cast<std::size_t>(d), 0.0);
          model.cls.linear.backward(pooled.data(), dlogits.data(), dpooled.data(), 1);
          const double inv = 1.0 / static_cast<double>(N);
          for (std::int64_t i = 0; i < N; ++i)
            kernels::active().axpy(inv, dpooled.data(), dz.ptr() + i * d,
                                   static_cast<std::size_t>(d));
        } else {
          Tensor per_token({N, 2});
          model.reg.linear.forward(z.ptr(), per_token.ptr(), N);
          const auto& gt = ds.gaze[static_cast<std::size_t>(wi)];
          double mean0 = 0.0, mean1 = 0.0;
          for (std::int64_t i = 0; i < N; ++i) {
            mean0 += per_token.at2(i, 0);
            mean1 += per_token.at2(i, 1);
          }
          mean0 /= static_cast<double>(N);
          mean1 /= static_cast<double>(N);
          const double e0 = mean0 - gt[0], e1 = mean1 - gt[1];
          loss = 0.5 * (e0 * e0 + e1 * e1);
          Tensor dpt({N, 2});
          const double inv = 1.0 / static_cast<double>(N);
          for (std::int64_t i = 0; i < N; ++i) {
            dpt.at2(i, 0) = e0 * inv;
            dpt.at2(i, 1) = e1 * inv;
          }
          model.reg.linear.backward(z.ptr(), dpt.ptr(), dz.ptr(), N);
        }
        epoch_loss += loss;
        ++n_seen;

        if (!cfg.freeze_encoder) {
          Tensor dtok({N, d});
          dtok.fill(0.0);
          model.encoder.backward(trace, dz.ptr(), dtok.ptr());
          token::embed_backward(grid, model.tokenizer, dtok.ptr(), nullptr);
        }
      }
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      for (auto* p : trainable.items)
        kernels::active().scal(inv, p->grad.ptr(),
                               static_cast<std::size_t>(p->grad.numel()));
      trainable.clip_grad(cfg.clip_norm);
      const double lr = nn::cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end);
      opt.step(trainable, lr);
      ++step;
      if (!std::isfinite(epoch_loss))
        throw TrainingError("finetune diverged (non-finite loss)");
    }
    res.train_loss_curve.push_back(n_seen ? epoch_loss / static_cast<double>(n_seen)
                                          : 0.0);
  }

  res.metrics = evaluate(model, ds, test_idx);
  return res;
}

MetricsReport evaluate(TaskModel& model, const data::WindowSet& ds,
                       const std::vector<std::int64_t>& idx) {
  if (idx.empty()) throw ValidationError("evaluate: empty index set");
  const bool classification = model.task == "classification";
  const std::int64_t d = model.tokenizer.cfg.embed_dim;

  std::vector<int> preds, labels;
  double err_sum = 0.0;
  for (std::int64_t wi : idx) {
    auto win = ds.window(wi);
    auto grid = token::segment(win, model.tokenizer.cfg.patch_samples);
    auto tokens = token::embed(grid, model.tokenizer);
    const std::int64_t N = tokens.n_tokens();
    Tensor z({N, d});
    model.encoder.forward(tokens.embeddings.ptr(), z.ptr(), N, nullptr);
    if (classification) {
      preds.push_back(argmax_class(classify(z, model.cls)));
      labels.push_back(ds.labels[static_cast<std::size_t>(wi)]);
    } else {
      err_sum += angular_error(regress(z, model.reg), ds.gaze[static_cast<std::size_t>(wi)]);
    }
  }
  if (classification) return classification_report(preds, labels);
  MetricsReport rep;
  rep.task = "gaze";
  rep.n_samples = static_cast<std::int64_t>(idx.size());
  rep.angular_error_deg = err_sum / static_cast<double>(idx.size());
  return rep;
}

}  // namespace exg::heads

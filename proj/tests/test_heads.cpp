#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "exg/errors.hpp"
#include "exg/heads.hpp"

using namespace exg;

TEST_CASE("pool_mean: constants, symmetry, oracle") {
  Tensor z({3, 4});
  for (std::int64_t i = 0; i < 3; ++i)
    for (std::int64_t j = 0; j < 4; ++j) z.at2(i, j) = static_cast<double>(j) + 1.0;
  auto pooled = heads::pool_mean(z);
  for (std::int64_t j = 0; j < 4; ++j)
    CHECK(pooled[static_cast<std::size_t>(j)] == doctest::Approx(j + 1.0));

  Tensor pm({2, 3});
  for (std::int64_t j = 0; j < 3; ++j) {
    pm.at2(0, j) = 0.5 * static_cast<double>(j + 1);
    pm.at2(1, j) = -0.5 * static_cast<double>(j + 1);
  }
  auto zero = heads::pool_mean(pm);
  for (double v : zero) CHECK(v == doctest::Approx(0.0));

  // random input vs independent summation oracle
  Rng rng(5);
  Tensor big({384, 64});
  for (auto& v : big.data) v = rng.normal();
  auto got = heads::pool_mean(big);
  for (std::int64_t j = 0; j < 64; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < 384; ++i) acc += big.at2(i, j);
    CHECK(got[static_cast<std::size_t>(j)] ==
          doctest::Approx(acc / 384.0).epsilon(1e-6));
  }
}

TEST_CASE("pool_mean commutes with token permutation") {
  Rng rng(7);
  Tensor z({16, 8});
  for (auto& v : z.data) v = rng.normal();
  auto base = heads::pool_mean(z);

  Tensor shuffled = z;
  std::vector<std::int64_t> perm(16);
  for (std::int64_t i = 0; i < 16; ++i) perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(perm);
  for (std::int64_t i = 0; i < 16; ++i)
    for (std::int64_t j = 0; j < 8; ++j)
      shuffled.at2(i, j) = z.at2(perm[static_cast<std::size_t>(i)], j);
  auto permuted = heads::pool_mean(shuffled);
  for (std::size_t j = 0; j < 8; ++j)
    CHECK(permuted[j] == doctest::Approx(base[j]).epsilon(1e-12));
}

TEST_CASE("classify: tie-break and argmax behavior") {
  heads::ClassifierHead head;
  head.init(3, 4, 1);
  head.linear.W.value.fill(0.0);
  head.linear.b.value.fill(0.0);

  Tensor z({2, 4});
  z.fill(0.3);
  auto logits = heads::classify(z, head);
  for (double v : logits) CHECK(v == 0.0);
  CHECK(heads::argmax_class(logits) == 0);  // lowest index wins ties

  CHECK(heads::argmax_class({0.1, 0.9}) == 1);
  // adding a constant to all logits leaves the argmax unchanged
  CHECK(heads::argmax_class({0.1 + 5.0, 0.9 + 5.0}) == 1);
}

TEST_CASE("regress: per-patch mean aggregation") {
  heads::RegressorHead head;
  head.init(4, 1);
  head.linear.W.value.fill(0.0);
  head.linear.b.value.data = {3.0, -2.0};

  Tensor z({5, 4});
  z.fill(1.0);
  auto out = heads::regress(z, head);
  CHECK(out[0] == doctest::Approx(3.0));
  CHECK(out[1] == doctest::Approx(-2.0));

  head.linear.b.value.data = {0.0, 0.0};
  auto zero = heads::regress(z, head);
  CHECK(zero[0] == doctest::Approx(0.0));
  CHECK(zero[1] == doctest::Approx(0.0));

  // two per-patch outputs {(0,0),(2,2)} -> (1,1): encode via bias on half the
  // tokens using distinct rows and a crafted weight
  heads::RegressorHead h2;
  h2.init(1, 1);
  h2.linear.W.value.data = {2.0, 2.0};  // out = 2*x for both dims
  h2.linear.b.value.data = {0.0, 0.0};
  Tensor feats({2, 1});
  feats.at2(0, 0) = 0.0;
  feats.at2(1, 0) = 1.0;
  auto mean2 = heads::regress(feats, h2);
  CHECK(mean2[0] == doctest::Approx(1.0));
  CHECK(mean2[1] == doctest::Approx(1.0));
}

TEST_CASE("macro_f1 matches hand-computed cases") {
  CHECK(heads::macro_f1({0, 1, 0, 1}, {0, 1, 0, 1}) == doctest::Approx(1.0));
  CHECK(heads::macro_f1({0, 1, 2}, {0, 1, 2}) == doctest::Approx(1.0));
  // balanced binary labels, always-0 predictor: macro F1 = 1/3
  CHECK(heads::macro_f1({0, 0, 0, 0}, {0, 0, 1, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(heads::macro_f1({}, {}), ValidationError);
}

TEST_CASE("macro_f1 invariances") {
  std::vector<int> preds = {0, 1, 1, 0, 2, 2, 1};
  std::vector<int> labels = {0, 1, 2, 0, 2, 0, 1};
  const double base = heads::macro_f1(preds, labels);

  // sample order permutation
  std::vector<std::size_t> perm = {3, 0, 6, 2, 5, 4, 1};
  std::vector<int> p2, l2;
  for (auto i : perm) {
    p2.push_back(preds[i]);
    l2.push_back(labels[i]);
  }
  CHECK(heads::macro_f1(p2, l2) == doctest::Approx(base));

  // label-name permutation applied to both sides
  auto rename = [](int v) { return (v + 1) % 3; };
  std::vector<int> p3, l3;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p3.push_back(rename(preds[i]));
    l3.push_back(rename(labels[i]));
  }
  CHECK(heads::macro_f1(p3, l3) == doctest::Approx(base));
}

TEST_CASE("angular_error: exact cases and translation invariance") {
  CHECK(heads::angular_error({1.0, 2.0}, {1.0, 2.0}) == doctest::Approx(0.0));
  CHECK(heads::angular_error({3.0, 4.0}, {0.0, 0.0}) == doctest::Approx(5.0));
  // batch mean of {0, 10} = 5
  const double mean =
      0.5 * (heads::angular_error({0, 0}, {0, 0}) + heads::angular_error({10, 0}, {0, 0}));
  CHECK(mean == doctest::Approx(5.0));
  // translation invariance
  CHECK(heads::angular_error({3.0 + 7.0, 4.0 - 2.0}, {0.0 + 7.0, 0.0 - 2.0}) ==
        doctest::Approx(5.0));
}

TEST_CASE("cross-entropy training separates linearly separable pooled features") {
  // two tiny clusters of windows, trivially separable at the pooled level
  data::WindowSet ds;
  Rng rng(3);
  for (int i = 0; i < 24; ++i) {
    sigproc::BandStack win;
    win.n_bands = 1;
    win.channels = 1;
    win.samples = 32;
    win.fs = 200.0;
    win.data.resize(32);
    const int label = i % 2;
    for (int t = 0; t < 32; ++t)
      win.data[static_cast<std::size_t>(t)] =
          (label ? 1.0 : -1.0) + 0.1 * rng.normal();
    ds.add(win, {"S0", "A", 0, i});
    ds.labels.push_back(label);
  }

  heads::TaskModel model;
  model.task = "classification";
  token::TokenizerConfig tc;
  tc.patch_samples = 8;
  tc.embed_dim = 8;
  tc.F = 1;
  tc.C = 1;
  tc.L = 4;
  model.tokenizer.init(tc, 5);
  enc::EncoderConfig ec;
  ec.backbone = "bi-ssm";
  ec.n_layers = 1;
  ec.model_dim = 8;
  ec.state_dim = 4;
  ec.seed = 6;
  model.encoder.init(ec);
  model.cls.init(2, 8, 7);

  std::vector<std::int64_t> train_idx, test_idx;
  for (std::int64_t i = 0; i < 20; ++i) train_idx.push_back(i);
  for (std::int64_t i = 20; i < 24; ++i) test_idx.push_back(i);

  heads::FinetuneConfig cfg;
  cfg.task = "classification";
  cfg.epochs = 25;  // 25 epochs x 3 batches < 200 steps
  cfg.batch_size = 8;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-3;
  cfg.seed = 11;
  auto res = heads::run_finetune(model, ds, train_idx, test_idx, cfg);

  CHECK(res.train_loss_curve.back() < 0.1);
  CHECK(res.metrics.macro_f1 == doctest::Approx(1.0));
}

TEST_CASE("finetune determinism and frozen-encoder schema") {
  data::WindowSet ds;
  Rng rng(9);
  for (int i = 0; i < 12; ++i) {
    sigproc::BandStack win;
    win.n_bands = 1;
    win.channels = 1;
    win.samples = 16;
    win.fs = 200.0;
    win.data.resize(16);
    for (auto& v : win.data) v = rng.normal() + (i % 2 ? 0.8 : -0.8);
    ds.add(win, {"S0", "A", 0, i});
    ds.labels.push_back(i % 2);
  }
  std::vector<std::int64_t> train_idx = {0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<std::int64_t> test_idx = {8, 9, 10, 11};

  auto make_model = [] {
    heads::TaskModel m;
    m.task = "classification";
    token::TokenizerConfig tc;
    tc.patch_samples = 4;
    tc.embed_dim = 6;
    tc.F = 1;
    tc.C = 1;
    tc.L = 4;
    m.tokenizer.init(tc, 2);
    enc::EncoderConfig ec;
    ec.backbone = "bi-ssm";
    ec.n_layers = 1;
    ec.model_dim = 6;
    ec.state_dim = 3;
    ec.seed = 3;
    m.encoder.init(ec);
    m.cls.init(2, 6, 4);
    return m;
  };

  heads::FinetuneConfig cfg;
  cfg.task = "classification";
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 21;

  auto m1 = make_model();
  auto r1 = heads::run_finetune(m1, ds, train_idx, test_idx, cfg);
  auto m2 = make_model();
  auto r2 = heads::run_finetune(m2, ds, train_idx, test_idx, cfg);
  CHECK(r1.metrics.macro_f1 == r2.metrics.macro_f1);
  CHECK(r1.train_loss_curve == r2.train_loss_curve);

  // frozen encoder produces a report with the same schema
  auto m3 = make_model();
  auto cfg_frozen = cfg;
  cfg_frozen.freeze_encoder = true;
  auto r3 = heads::run_finetune(m3, ds, train_idx, test_idx, cfg_frozen);
  CHECK(r3.metrics.task == r1.metrics.task);
  CHECK(r3.metrics.n_samples == r1.metrics.n_samples);
  CHECK(r3.metrics.per_class_precision.size() == r1.metrics.per_class_precision.size());
}

TEST_CASE("gaze finetune learns a strong amplitude cue") {
  data::WindowSet ds;
  Rng rng(13);
  for (int i = 0; i < 30; ++i) {
    sigproc::BandStack win;
    win.n_bands = 1;
    win.channels = 2;
    win.samples = 32;
    win.fs = 200.0;
    win.data.resize(64);
    const double h = rng.uniform(-10.0, 10.0);
    const double v = rng.uniform(-10.0, 10.0);
    for (int t = 0; t < 32; ++t) {
      win.slice(0, 0)[t] = 0.1 * h + 0.02 * rng.normal();
      win.slice(0, 1)[t] = 0.1 * v + 0.02 * rng.normal();
    }
    ds.add(win, {"S0", "A", 0, i});
    ds.gaze.push_back({h, v});
  }
  std::vector<std::int64_t> train_idx, test_idx;
  for (std::int64_t i = 0; i < 24; ++i) train_idx.push_back(i);
  for (std::int64_t i = 24; i < 30; ++i) test_idx.push_back(i);

  heads::TaskModel model;
  model.task = "gaze";
  token::TokenizerConfig tc;
  tc.patch_samples = 8;
  tc.embed_dim = 8;
  tc.F = 1;
  tc.C = 2;
  tc.L = 4;
  model.tokenizer.init(tc, 15);
  enc::EncoderConfig ec;
  ec.backbone = "bi-ssm";
  ec.n_layers = 1;
  ec.model_dim = 8;
  ec.state_dim = 4;
  ec.seed = 16;
  model.encoder.init(ec);
  model.reg.init(8, 17);

  heads::FinetuneConfig cfg;
  cfg.task = "gaze";
  cfg.epochs = 60;
  cfg.batch_size = 10;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-4;
  cfg.seed = 19;
  auto res = heads::run_finetune(model, ds, train_idx, test_idx, cfg);
  MESSAGE("gaze test error: ", res.metrics.angular_error_deg);
  CHECK(res.metrics.angular_error_deg < 2.0);
}

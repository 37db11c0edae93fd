// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cib/autodiff/ops.hpp"
#include "cib/baselines/ct.hpp"
#include "cib/nn/checkpoint.hpp"
#include "cib/train/optimizer.hpp"
#include "cib/train/trainer.hpp"

using namespace cib;
using ad::Tensor;
using model::ExperimentConfig;
using model::OptimizerKind;

namespace {

Tensor leaf(double v) {
  Tensor t = Tensor::from({1}, {v});
  t.set_requires_grad();
  return t;
}

nn::ParamList with_grad(const Tensor& t, double g) {
  Tensor copy = t;
  // Seed a gradient through a trivial backward pass.
  ad::Tape tape;
  {
    ad::TapeScope scope(tape);
    Tensor loss = ad::scale(ad::sum(copy), g);
    tape.backward(loss);
  }
  return {{"theta", copy, nn::ParamKind::weight}};
}

data::DatasetBundle tiny_bundle(std::uint64_t seed = 1, int k = 4) {
  data::ConfoundedSpec s;
  s.num_classes = k;
  s.n_train = 256;
  s.n_val_iid = s.n_test_iid = s.n_val_ood = s.n_test_ood = 128;
  return data::gen_confounded(s, seed);
}

ExperimentConfig tiny_config(model::ModelKind kind = model::ModelKind::cib) {
  ExperimentConfig c;
  c.model = kind;
  c.N = 2;
  c.M = 2;
  c.repr_dim = 4;
  c.hidden = 8;
  c.encoder_hidden = 8;
  c.batch_size = 32;
  c.epochs = 2;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cib_train_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(AdamW, ZeroGradientAndDecayLeavesParameterUnchanged) {
  Tensor t = leaf(1.25);
  train::Optimizer opt(OptimizerKind::adamw, 0.1, 0.0);
  for (int i = 0; i < 3; ++i) opt.step(with_grad(t, 0.0));
  EXPECT_EQ(t.at(0), 1.25);
}

TEST(AdamW, FirstStepMatchesRecurrence) {
  Tensor t = leaf(0.5);
  train::Optimizer opt(OptimizerKind::adamw, 0.1, 0.0);
  opt.step(with_grad(t, 1.0));
  // m = 0.1, v = 0.001; bias corrected m_hat = 1, v_hat = 1.
  const double m_hat = (0.1 * 1.0) / (1.0 - 0.9);
  const double v_hat = (0.001 * 1.0) / (1.0 - 0.999);
  EXPECT_NEAR(t.at(0), 0.5 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-15);
  EXPECT_NEAR(t.at(0), 0.4 + 1e-9, 1e-9);
}

TEST(AdamW, DecoupledDecayWithZeroGradient) {
  Tensor t = leaf(2.0);
  train::Optimizer opt(OptimizerKind::adamw, 0.1, 0.01);
  opt.step(with_grad(t, 0.0));
  EXPECT_NEAR(t.at(0), 2.0 - 0.1 * 0.01 * 2.0, 1e-15);
}

TEST(Sgd, StepIncludesCoupledDecay) {
  Tensor t = leaf(1.0);
  train::Optimizer opt(OptimizerKind::sgd, 0.5, 0.1);
  opt.step(with_grad(t, 2.0));
  EXPECT_NEAR(t.at(0), 1.0 - 0.5 * (2.0 + 0.1), 1e-15);
}

TEST(Optimizer, MissingGradientIsAnError) {
  Tensor t = leaf(1.0);
  train::Optimizer opt(OptimizerKind::adamw, 0.1, 0.0);
  nn::ParamList params{{"theta", t, nn::ParamKind::weight}};
  EXPECT_THROW(opt.step(params), train::OptimizerError);
  // Buffers are skipped.
  nn::ParamList buffers{{"running", Tensor::from({1}, {3.0}), nn::ParamKind::buffer}};
  EXPECT_NO_THROW(opt.step(buffers));
}

TEST(MakeBatch, ContextsComeFromThePool) {
  auto b = tiny_bundle();
  const auto& tr = b.split(data::SplitId::train);
  nn::Rng rng(3);
  auto batch = train::make_batch(b.split(data::SplitId::val_iid), {0, 1, 2}, tr, 5, b.spec.sample_shape(), 4, rng);
  EXPECT_EQ(batch.contexts.shape(), (ad::Shape{3, 5, 8}));
  EXPECT_EQ(batch.context_labels.shape(), (ad::Shape{3, 5, 4}));
  EXPECT_NO_THROW(batch.validate(4));
  // Every context row is some training row.
  for (std::size_t r = 0; r < 15; ++r) {
    bool found = false;
    for (std::size_t i = 0; i < tr.size() && !found; ++i) {
      bool same = true;
      for (std::size_t j = 0; j < 8; ++j) same = same && batch.contexts.at(r * 8 + j) == static_cast<double>(tr.inputs[i * 8 + j]);
      found = same;
    }
    EXPECT_TRUE(found) << r;
  }
}

TEST(Predict, ArgmaxExamplesAndTieBreak) {
  auto classes = model::argmax_rows(Tensor::from({2, 3}, {0.2, 0.5, 0.3, 0.4, 0.4, 0.2}));
  EXPECT_EQ(classes[0], 1u);
  EXPECT_EQ(classes[1], 0u);
  auto tie = model::argmax_rows(Tensor::from({1, 2}, {0.5, 0.5}));
  EXPECT_EQ(tie[0], 0u);
}

TEST(Predict, EmptyContextPoolIsAnError) {
  auto b = tiny_bundle();
  auto m = train::make_classifier(tiny_config(), b.spec.sample_shape(), 4);
  data::Split empty;
  nn::Rng rng(1);
  nn::SeededNoise noise(1);
  EXPECT_THROW(train::predict(*m, Tensor::zeros({2, 8}), empty, b.spec.sample_shape(), 4, rng, noise),
               std::invalid_argument);
}

TEST(Predict, CollapseConfigIsDeterministic) {
  auto b = tiny_bundle();
  ExperimentConfig c = tiny_config();
  c.N = 1;
  c.init_log_var = nn::kLogVarMin;
  auto m = train::make_classifier(c, b.spec.sample_shape(), 4);
  m->set_batchnorm_mode(nn::BatchNormMode::eval_iid);
  const auto& tr = b.split(data::SplitId::train);
  Tensor x = data::gather_inputs(b.split(data::SplitId::test_iid), b.spec.sample_shape(), {0, 1, 2, 3, 4});
  auto run = [&] {
    nn::Rng rng(9);
    nn::SeededNoise noise(9);
    return train::predict(*m, x, tr, b.spec.sample_shape(), 4, rng, noise);
  };
  auto p1 = run(), p2 = run();
  EXPECT_EQ(p1.classes, p2.classes);
  for (std::size_t i = 0; i < p1.probs.numel(); ++i) EXPECT_EQ(p1.probs.at(i), p2.probs.at(i));
}

TEST(Train, SameSeedGivesIdenticalMetrics) {
  auto b = tiny_bundle();
  for (auto kind : {model::ModelKind::cib, model::ModelKind::point, model::ModelKind::ct}) {
    ExperimentConfig c = tiny_config(kind);
    auto m1 = train::make_classifier(c, b.spec.sample_shape(), 4);
    auto m2 = train::make_classifier(c, b.spec.sample_shape(), 4);
    auto r1 = train::train(*m1, b, c);
    auto r2 = train::train(*m2, b, c);
    EXPECT_EQ(r1.to_csv(), r2.to_csv()) << model::model_name(kind);
    EXPECT_EQ(r1.summary_json(), r2.summary_json());
    EXPECT_EQ(r1.rows.size(), 2u);
  }
}

TEST(Train, DifferentSeedsDiffer) {
  auto b = tiny_bundle();
  ExperimentConfig c = tiny_config();
  auto m1 = train::make_classifier(c, b.spec.sample_shape(), 4);
  auto r1 = train::train(*m1, b, c);
  c.seed = 1;
  auto m2 = train::make_classifier(c, b.spec.sample_shape(), 4);
  auto r2 = train::train(*m2, b, c);
  EXPECT_NE(r1.to_csv(), r2.to_csv());
}

TEST(Train, CsvColumnsAndGapBookkeeping) {
  auto b = tiny_bundle();
  ExperimentConfig c = tiny_config();
  c.epochs = 3;
  auto m = train::make_classifier(c, b.spec.sample_shape(), 4);
  auto r = train::train(*m, b, c);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,step,train_total,train_cross_entropy,train_weight_func,train_kl_input_repr,"
            "train_kl_context_repr,train_kl_weights,val_iid_loss,val_iid_acc,val_ood_loss,val_ood_acc");
  double lowest = r.rows[0].val_iid.loss;
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    EXPECT_GT(r.rows[i].step, r.rows[i - 1].step);
    EXPECT_EQ(r.rows[i].epoch, r.rows[i - 1].epoch + 1);
    lowest = std::min(lowest, r.rows[i].val_iid.loss);
  }
  EXPECT_EQ(r.overfitting_gap, r.rows.back().val_iid.loss - lowest);
  EXPECT_EQ(r.best_val_loss, lowest);
  EXPECT_EQ(r.total_steps, 3 * 8);
}

TEST(Train, StepCadenceRecordsEveryKSteps) {
  auto b = tiny_bundle();
  ExperimentConfig c = tiny_config(model::ModelKind::point);
  c.eval_every = 5;
  auto m = train::make_classifier(c, b.spec.sample_shape(), 4);
  auto r = train::train(*m, b, c);
  ASSERT_EQ(r.total_steps, 16);
  std::vector<std::int64_t> steps;
  for (const auto& row : r.rows) steps.push_back(row.step);
  EXPECT_EQ(steps, (std::vector<std::int64_t>{5, 10, 15, 16}));
}

TEST(Train, ZeroLearningRateKeepsTrainableParameters) {
  auto b = tiny_bundle();
  ExperimentConfig c = tiny_config();
  c.lr = 0.0;
  auto m = train::make_classifier(c, b.spec.sample_shape(), 4);
  std::vector<std::vector<double>> before;
  for (const auto& p : m->parameters()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  train::train(*m, b, c);
  auto params = m->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable()) continue;
    EXPECT_EQ(std::vector<double>(params[i].tensor.data().begin(), params[i].tensor.data().end()), before[i])
        << params[i].name;
  }
}

TEST(Train, SeparableFixtureReachesFullTrainAccuracy) {
  data::ConfoundedSpec s;
  s.num_classes = 4;
  s.n_train = 512;
  s.n_val_iid = s.n_test_iid = s.n_val_ood = s.n_test_ood = 64;
  s.invariant_separation = 8.0;
  s.noise_std = 0.5;
  auto b = data::gen_confounded(s, 3);
  ExperimentConfig c = tiny_config(model::ModelKind::point);
  c.epochs = 50;
  auto m = train::make_classifier(c, b.spec.sample_shape(), 4);
  train::train(*m, b, c);
  auto acc = train::evaluate(*m, b, data::SplitId::train, train::EvalMode::iid, c, c.seed);
  EXPECT_GE(acc.accuracy, 0.99);
}

TEST(Train, DivergenceNamesTheTensor) {
  auto b = tiny_bundle();
  ExperimentConfig c = tiny_config(model::ModelKind::point);
  c.optimizer = OptimizerKind::sgd;
  c.lr = 1e300;
  auto m = train::make_classifier(c, b.spec.sample_shape(), 4);
  try {
    train::train(*m, b, c);
    FAIL() << "expected divergence";
  } catch (const train::DivergenceError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
    EXPECT_NE(msg.find("step 2"), std::string::npos) << msg;
  }
}

TEST(Evaluate, PerfectProbeScoresOne) {
  // A vector bundle whose first feature is the label; the probe reads it.
  class Probe final : public model::Classifier {
   public:
    model::ModelKind kind() const override { return model::ModelKind::point; }
    std::size_t num_classes() const override { return 3; }
    std::size_t contexts_per_input() const override { return 0; }
    model::LossBreakdown training_loss(const model::ContextBatch&, nn::NoiseSource&) override {
      return model::LossBreakdown::combine({{"cross_entropy", 1.0, Tensor::scalar(0.0)}});
    }
    Tensor predict_probs(const model::ContextBatch& b, nn::NoiseSource&) override {
      const std::size_t n = b.inputs.size(0), d = b.inputs.size(1);
      std::vector<double> p(n * 3, 0.0);
      for (std::size_t r = 0; r < n; ++r) p[r * 3 + static_cast<std::size_t>(b.inputs.at(r * d))] = 1.0;
      return Tensor::from({n, 3}, p);
    }
    void collect(nn::ParamList&) const override {}
    void set_batchnorm_mode(nn::BatchNormMode) override {}
  };
  auto b = tiny_bundle(1, 3);
  auto& s = b.split(data::SplitId::test_iid);
  for (std::size_t i = 0; i < s.size(); ++i) s.inputs[i * 8] = static_cast<float>(s.labels[i]);
  Probe probe;
  auto r = train::evaluate(probe, b, data::SplitId::test_iid, train::EvalMode::iid, tiny_config(), 0);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.count, s.size());
}

TEST(Evaluate, RandomInitIsNearChance) {
  data::ConfoundedSpec s;
  s.num_classes = 2;
  s.n_train = 64;
  s.n_val_iid = s.n_test_iid = s.n_val_ood = s.n_test_ood = 1000;
  auto b = data::gen_confounded(s, 5);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ExperimentConfig c = tiny_config();
    c.seed = seed;
    auto m = train::make_classifier(c, b.spec.sample_shape(), 2);
    total += train::evaluate(*m, b, data::SplitId::test_iid, train::EvalMode::ood, c, seed).accuracy;
  }
  EXPECT_NEAR(total / 10.0, 0.5, 0.05);
}

TEST(Evaluate, BatchStatisticsRecoverAMeanShift) {
  data::ConfoundedSpec s;
  s.num_classes = 4;
  s.n_train = 1024;
  s.n_val_iid = s.n_test_iid = s.n_val_ood = s.n_test_ood = 256;
  s.ood_correlation = s.train_correlation;
  int wins = 0;
  double iid_sum = 0.0, ood_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto b = data::gen_confounded(s, seed);
    for (float& v : b.split(data::SplitId::test_ood).inputs) v += 4.0f;
    ExperimentConfig c = tiny_config(model::ModelKind::point);
    c.seed = seed;
    c.epochs = 3;
    auto m = train::make_classifier(c, b.spec.sample_shape(), 4);
    train::train(*m, b, c);
    const double iid = train::evaluate(*m, b, data::SplitId::test_ood, train::EvalMode::iid, c, seed).accuracy;
    const double ood = train::evaluate(*m, b, data::SplitId::test_ood, train::EvalMode::ood, c, seed).accuracy;
    wins += ood > iid ? 1 : 0;
    iid_sum += iid;
    ood_sum += ood;
  }
  EXPECT_GE(wins, 4);
  EXPECT_GT(ood_sum, iid_sum);
}

TEST(Evaluate, EmptySplitIsAnError) {
  auto b = tiny_bundle();
  b.split(data::SplitId::val_ood) = data::Split{};
  auto m = train::make_classifier(tiny_config(), b.spec.sample_shape(), 4);
  EXPECT_THROW(train::evaluate(*m, b, data::SplitId::val_ood, train::EvalMode::ood, tiny_config(), 0),
               std::invalid_argument);
}

TEST(CtPretraining, LowersInitialReconstruction) {
  auto b = tiny_bundle();
  const auto& tr = b.split(data::SplitId::train);
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor x = data::gather_inputs(tr, b.spec.sample_shape(), idx);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ExperimentConfig c = tiny_config(model::ModelKind::ct);
    c.seed = seed;
    c.epochs = 0;
    auto recon = [&](model::Classifier& m) {
      auto& ct = dynamic_cast<baselines::CTModel&>(m);
      ct.set_batchnorm_mode(nn::BatchNormMode::eval_ood);
      nn::ZeroNoise zero;
      const double v = ct.pretrain_loss(x, zero).value("recon");
      ct.set_batchnorm_mode(nn::BatchNormMode::train);
      return v;
    };
    auto fresh = train::make_classifier(c, b.spec.sample_shape(), 4);
    const double before = recon(*fresh);
    c.pretrain_epochs = 5;
    auto pre = train::make_classifier(c, b.spec.sample_shape(), 4);
    train::train(*pre, b, c);
    EXPECT_LE(recon(*pre), before) << "seed " << seed;
  }
}

TEST(Checkpoint, TrainWritesFilesAndReloadReproducesTestAccuracy) {
  auto b = tiny_bundle();
  ExperimentConfig c = tiny_config();
  const auto dir = temp_dir("files");
  auto m = train::make_classifier(c, b.spec.sample_shape(), 4);
  train::TrainOptions opts;
  opts.out_dir = dir;
  auto r = train::train(*m, b, c, opts);
  for (const char* f : {"metrics.csv", "model.ckpt", "config.resolved", "summary.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  std::ifstream csv(dir / "metrics.csv");
  std::stringstream ss;
  ss << csv.rdbuf();
  EXPECT_EQ(ss.str(), r.to_csv());
  auto loaded = train::load_model(dir / "model.ckpt");
  EXPECT_EQ(loaded.config.to_kv(), c.to_kv());
  EXPECT_EQ(loaded.sample_shape, b.spec.sample_shape());
  auto again = train::evaluate(*loaded.model, b, data::SplitId::test_iid, train::EvalMode::iid, c, c.seed);
  EXPECT_EQ(again.accuracy, r.test_iid.accuracy);
  EXPECT_EQ(again.loss, r.test_iid.loss);
  std::filesystem::remove_all(dir);
}

TEST(Sweep, GridShapeOrderAndThreadIndependence) {
  auto b = tiny_bundle();
  ExperimentConfig c = tiny_config();
  c.epochs = 1;
  auto cells = train::sweep(c, b, {1, 2}, {1, 3}, {0, 1}, 1);
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_EQ(cells[0].N, 1);
  EXPECT_EQ(cells[0].M, 1);
  EXPECT_EQ(cells[1].seed, 1u);
  EXPECT_EQ(cells[2].M, 3);
  EXPECT_EQ(cells[4].N, 2);
  auto threaded = train::sweep(c, b, {1, 2}, {1, 3}, {0, 1}, 3);
  EXPECT_EQ(train::sweep_csv(cells), train::sweep_csv(threaded));
  for (const auto& cell : cells) {
    EXPECT_GE(cell.accuracy, 0.0);
    EXPECT_LE(cell.accuracy, 1.0);
  }
}

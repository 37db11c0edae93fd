// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "../support/model_fixtures.hpp"
#include "cib/autodiff/gradcheck.hpp"
#include "cib/autodiff/ops.hpp"
#include "cib/baselines/ct.hpp"
#include "cib/baselines/point.hpp"
#include "cib/model/cib_model.hpp"

using namespace cib;
using ad::Tensor;
using baselines::CTModel;
using baselines::PointModel;
using model::ExperimentConfig;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.N = 2;
  c.M = 2;
  c.repr_dim = 4;
  c.hidden = 8;
  c.encoder_hidden = 6;
  return c;
}

Tensor& param(const nn::ParamList& params, const std::string& name) {
  for (const auto& p : params) {
    if (p.name == name) return const_cast<Tensor&>(p.tensor);
  }
  throw std::out_of_range(name);
}

std::vector<Tensor> trainable(const model::Classifier& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters()) {
    if (p.trainable()) out.push_back(p.tensor);
  }
  return out;
}

}  // namespace

TEST(PointModel, RowsSumToOne) {
  nn::Rng rng(1);
  PointModel m(small_config(), {5}, 3, rng);
  Tensor p = m.forward(nn::normal_tensor({6, 5}, rng));
  for (std::size_t r = 0; r < 6; ++r) {
    EXPECT_NEAR(p.at(3 * r) + p.at(3 * r + 1) + p.at(3 * r + 2), 1.0, 1e-9);
  }
}

TEST(PointModel, FixedSeedIsDeterministic) {
  nn::Rng a(4), b(4);
  PointModel m1(small_config(), {5}, 3, a);
  PointModel m2(small_config(), {5}, 3, b);
  nn::Rng data(9);
  Tensor x = nn::normal_tensor({4, 5}, data);
  Tensor p1 = m1.forward(x), p2 = m2.forward(x);
  for (std::size_t i = 0; i < p1.numel(); ++i) EXPECT_EQ(p1.at(i), p2.at(i));
}

TEST(PointModel, RejectsWrongInputShape) {
  nn::Rng rng(1);
  PointModel m(small_config(), {5}, 3, rng);
  EXPECT_THROW(m.forward(Tensor::zeros({2, 6})), ad::ShapeError);
}

TEST(PointModel, GradientCheck) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    nn::Rng rng(seed);
    PointModel m(small_config(), {5}, 3, rng);
    auto batch = cib::testing::random_batch(3, 0, {5}, 3, rng);
    nn::ZeroNoise noise;
    auto f = [&] { return m.training_loss(batch, noise).total; };
    auto report = ad::finite_difference_check(f, trainable(m), 1e-5, 1e-4);
    EXPECT_TRUE(report.passed) << report.summary();
  }
}

TEST(PointModel, CnnEncoderGradientCheck) {
  ExperimentConfig c = small_config();
  c.encoder = model::EncoderKind::cnn;
  c.conv_channels = 2;
  nn::Rng rng(3);
  PointModel m(c, {1, 4, 4}, 2, rng);
  auto batch = cib::testing::random_batch(2, 0, {1, 4, 4}, 2, rng);
  nn::ZeroNoise noise;
  auto f = [&] { return m.training_loss(batch, noise).total; };
  auto report = ad::finite_difference_check(f, trainable(m), 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.summary();
}

// CIB with one context equal to the input and the point model holding the
// same means with a doubled first layer: without noise both compute
// f(2 * mu(x)).
TEST(Collapse, NoiselessCibEqualsPointBaseline) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ExperimentConfig c;
    c.N = 1;
    c.M = 1;
    c.init_log_var = nn::kLogVarMin;
    nn::Rng rng(seed);
    model::CIBModel cib(c, {8}, 4, rng);
    PointModel point(c, {8}, 4, rng);
    baselines::copy_collapsed(cib, point);
    model::ContextBatch batch = cib::testing::random_batch(16, 0, {8}, 4, rng);
    batch.contexts = ad::reshape(batch.inputs, {16, 1, 8});
    batch.context_labels = ad::reshape(batch.input_labels, {16, 1, 4});
    nn::ZeroNoise zero;
    Tensor pc = cib.predict_probs(batch, zero);
    Tensor pb = point.forward(batch.inputs);
    for (std::size_t i = 0; i < pc.numel(); ++i) EXPECT_NEAR(pc.at(i), pb.at(i), 1e-12);
  }
}

TEST(Collapse, CopyPinsEncoderVarianceToFloor) {
  ExperimentConfig c;
  nn::Rng rng(0);
  model::CIBModel cib(c, {8}, 4, rng);
  PointModel point(c, {8}, 4, rng);
  baselines::copy_collapsed(cib, point);
  auto cp = cib.parameters();
  for (double w : param(cp, "encoder.log_var_head.weight").data()) EXPECT_EQ(w, 0.0);
  for (double b : param(cp, "encoder.log_var_head.bias").data()) EXPECT_EQ(b, nn::kLogVarMin);
  for (double v : param(cp, "inference.first.weight.log_var").data()) EXPECT_EQ(v, nn::kLogVarMin);
}

TEST(CtLoss, ZeroWeightsIsCrossEntropyOnly) {
  Tensor probs = Tensor::from({1, 2}, {0.25, 0.75});
  auto loss = baselines::ct_loss(probs, Tensor::from({1, 2}, {0, 1}), Tensor::scalar(3.0), Tensor::scalar(4.0), 0.0,
                                 0.0);
  EXPECT_EQ(loss.total.item(), loss.value("cross_entropy"));
  EXPECT_NEAR(loss.total.item(), -std::log(0.75), 1e-15);
}

TEST(CtLoss, UniformBinaryIsLn2) {
  auto loss = baselines::ct_loss(Tensor::from({1, 2}, {0.5, 0.5}), Tensor::from({1, 2}, {1, 0}), Tensor::scalar(0.0),
                                 Tensor::scalar(0.0), 1.0, 1e-3);
  EXPECT_NEAR(loss.value("cross_entropy"), std::log(2.0), 1e-15);
}

TEST(CtLoss, WeightsCombineInOrder) {
  auto loss = baselines::ct_loss(Tensor::from({1, 2}, {0.5, 0.5}), Tensor::from({1, 2}, {1, 0}), Tensor::scalar(0.3),
                                 Tensor::scalar(2.0), 1.0, 1e-3);
  EXPECT_EQ(loss.total.item(), loss.accounted_total());
  EXPECT_EQ(loss.total.item(), std::log(2.0) + 1.0 * 0.3 + 1e-3 * 2.0);
}

TEST(CTModel, ShapesAndProbabilityRows) {
  nn::Rng rng(2);
  CTModel m(small_config(), {5}, 3, rng);
  EXPECT_EQ(m.inference_layers().size(), 5u);
  EXPECT_EQ(m.inference_layers()[0].in_features(), 5u + 4u);
  Tensor dec = m.decode(nn::normal_tensor({3, 4}, rng));
  EXPECT_EQ(dec.shape(), (ad::Shape{3, 5}));
  nn::SeededNoise noise(1);
  auto f = m.forward(cib::testing::random_batch(3, 2, {5}, 3, rng), noise);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(f.probs.at(3 * r) + f.probs.at(3 * r + 1) + f.probs.at(3 * r + 2), 1.0, 1e-9);
  EXPECT_GE(f.recon_loss.item(), 0.0);
  EXPECT_GE(f.kl.item(), 0.0);
}

TEST(CTModel, ImageDecoderMatchesInputShape) {
  ExperimentConfig c = small_config();
  c.encoder = model::EncoderKind::cnn;
  c.conv_channels = 2;
  nn::Rng rng(2);
  CTModel m(c, {3, 8, 8}, 2, rng);
  EXPECT_EQ(m.decode(nn::normal_tensor({2, 4}, rng)).shape(), (ad::Shape{2, 3, 8, 8}));
}

TEST(CTModel, StandardPosteriorHasZeroKl) {
  nn::Rng rng(2);
  CTModel m(small_config(), {5}, 3, rng);
  auto params = m.parameters();
  for (const char* n : {"vae.encoder.mean_head.weight", "vae.encoder.mean_head.bias",
                        "vae.encoder.log_var_head.weight", "vae.encoder.log_var_head.bias"}) {
    cib::testing::fill(param(params, n), 0.0);
  }
  nn::SeededNoise noise(1);
  EXPECT_EQ(m.forward(cib::testing::random_batch(3, 1, {5}, 3, rng), noise).kl.item(), 0.0);
}

TEST(CTModel, ProbsAreTheUniformMeanOverContexts) {
  nn::Rng rng(8);
  CTModel m(small_config(), {5}, 3, rng);
  m.set_batchnorm_mode(nn::BatchNormMode::eval_iid);
  auto both = cib::testing::random_batch(2, 2, {5}, 3, rng);
  auto only = [&](std::size_t i) {
    auto b = both;
    std::vector<double> cx, cl;
    for (std::size_t r = 0; r < 2; ++r) {
      cx.insert(cx.end(), both.contexts.data().begin() + (r * 2 + i) * 5, both.contexts.data().begin() + (r * 2 + i + 1) * 5);
      cl.insert(cl.end(), both.context_labels.data().begin() + (r * 2 + i) * 3,
                both.context_labels.data().begin() + (r * 2 + i + 1) * 3);
    }
    b.contexts = Tensor::from({2, 1, 5}, cx);
    b.context_labels = Tensor::from({2, 1, 3}, cl);
    return b;
  };
  nn::SeededNoise n0(4), n1(4), n2(4);
  Tensor p = m.forward(both, n0).probs;
  Tensor p1 = m.forward(only(0), n1).probs;
  Tensor p2 = m.forward(only(1), n2).probs;
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.at(i), 0.5 * (p1.at(i) + p2.at(i)), 1e-15);
}

TEST(CTModel, GradientCheck) {
  ExperimentConfig c = small_config();
  c.kl_weight = 0.1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    nn::Rng rng(50 + seed);
    CTModel m(c, {5}, 3, rng);
    auto batch = cib::testing::random_batch(2, 2, {5}, 3, rng);
    nn::SeededNoise inner(seed);
    nn::ReplayNoise replay(inner);
    auto f = [&] {
      replay.rewind();
      return m.training_loss(batch, replay).total;
    };
    auto report = ad::finite_difference_check(f, trainable(m), 1e-5, 1e-3);
    EXPECT_TRUE(report.passed) << "seed " << seed << ": " << report.summary();
  }
}

TEST(CTModel, FrozenVaeIsNotTrainable) {
  nn::Rng rng(2);
  CTModel m(small_config(), {5}, 3, rng);
  m.set_vae_frozen(true);
  for (const auto& p : m.parameters()) {
    EXPECT_EQ(p.trainable(), p.name.rfind("inference.", 0) == 0) << p.name;
  }
}

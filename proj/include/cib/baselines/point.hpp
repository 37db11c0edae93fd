// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Point-estimate baseline: the CIB encoder without its log-variance head,
// followed by a three-layer MLP with the inference network's widths.

#pragma once

#include "cib/model/cib_model.hpp"
#include "cib/model/classifier.hpp"
#include "cib/model/encoder.hpp"

namespace cib::baselines {

class PointModel final : public model::Classifier {
 public:
  PointModel(const model::ExperimentConfig& cfg, const ad::Shape& sample_shape, std::size_t num_classes,
             nn::Rng& rng);

  /// Softmax probabilities [B, K].
  ad::Tensor forward(const ad::Tensor& inputs);

  model::ModelKind kind() const override { return model::ModelKind::point; }
  std::size_t num_classes() const override { return last_.out_features(); }
  std::size_t contexts_per_input() const override { return 0; }
  model::LossBreakdown training_loss(const model::ContextBatch& batch, nn::NoiseSource& noise) override;
  ad::Tensor predict_probs(const model::ContextBatch& batch, nn::NoiseSource& noise) override;
  void collect(nn::ParamList& out) const override;
  void set_batchnorm_mode(nn::BatchNormMode m) override { encoder_.set_mode(m); }

  model::Encoder& encoder() { return encoder_; }
  nn::Linear& first() { return first_; }
  nn::Linear& hidden() { return hidden_; }
  nn::Linear& last() { return last_; }

 private:
  model::Encoder encoder_;
  nn::Linear first_;
  nn::Linear hidden_;
  nn::Linear last_;
};

/// Puts every variance of `cib` at the log-variance floor and loads `point`
/// with the encoder and the posterior means, first-layer weight doubled, so
/// that with one self-context both compute f(2 * mu(x)) up to noise.
void copy_collapsed(model::CIBModel& cib, PointModel& point);

}  // namespace cib::baselines

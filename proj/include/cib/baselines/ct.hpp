// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Causal-transportability baseline: a VAE over the input and a dense
// inference network reading each context image concatenated with the
// input's representation.

#pragma once

#include <vector>

#include "cib/model/classifier.hpp"
#include "cib/model/encoder.hpp"

namespace cib::baselines {

struct CtForward {
  ad::Tensor probs;       // [B, K], uniform mean over contexts
  ad::Tensor recon_loss;  // pixel MSE of decoder(r) against the input
  ad::Tensor kl;          // mean over inputs of the per-row posterior KL
};

/// cross_entropy + recon_weight * recon_loss + kl_weight * kl.
model::LossBreakdown ct_loss(const ad::Tensor& probs, const ad::Tensor& labels, const ad::Tensor& recon_loss,
                             const ad::Tensor& kl, double recon_weight, double kl_weight);

class CTModel final : public model::Classifier {
 public:
  CTModel(const model::ExperimentConfig& cfg, const ad::Shape& sample_shape, std::size_t num_classes, nn::Rng& rng);

  CtForward forward(const model::ContextBatch& batch, nn::NoiseSource& noise);
  /// VAE-only objective recon_loss + kl_weight * kl used in the pretraining stage.
  model::LossBreakdown pretrain_loss(const ad::Tensor& inputs, nn::NoiseSource& noise);
  /// Decoder output for representation rows r: [B, sample_shape...].
  ad::Tensor decode(const ad::Tensor& r);

  model::ModelKind kind() const override { return model::ModelKind::ct; }
  std::size_t num_classes() const override { return layers_.back().out_features(); }
  std::size_t contexts_per_input() const override { return static_cast<std::size_t>(cfg_.N); }
  model::LossBreakdown training_loss(const model::ContextBatch& batch, nn::NoiseSource& noise) override;
  ad::Tensor predict_probs(const model::ContextBatch& batch, nn::NoiseSource& noise) override;
  void collect(nn::ParamList& out) const override;
  void set_batchnorm_mode(nn::BatchNormMode m) override { encoder_.set_mode(m); }

  /// Frozen VAE parameters are reported as non-trainable.
  void set_vae_frozen(bool frozen) { vae_frozen_ = frozen; }
  model::Encoder& encoder() { return encoder_; }
  std::vector<nn::Linear>& inference_layers() { return layers_; }

 private:
  model::ExperimentConfig cfg_;
  ad::Shape sample_shape_;
  model::Encoder encoder_;
  nn::Linear dec_hidden_;
  nn::Linear dec_out_;
  std::vector<nn::Linear> layers_;  // 5 dense layers, SiLU between
  bool vae_frozen_ = false;
};

}  // namespace cib::baselines

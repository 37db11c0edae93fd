// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Causal-invariant Bayesian classifier: a shared variational encoder, input
// and context representations summed pairwise, and an inference MLP whose
// first and last layers are Bayesian.

#pragma once

#include "cib/model/classifier.hpp"
#include "cib/model/encoder.hpp"

namespace cib::model {

struct EncodeResult {
  ad::Tensor repr;  // [B, d], one reparameterized sample
  ad::Tensor kl;    // scalar, summed over rows and dimensions
};

struct CibForward {
  ad::Tensor probs;             // [B, K]
  ad::Tensor per_weight_probs;  // [M, B, K]
  ad::Tensor kl_input_repr;     // mean over inputs of the per-row KL
  ad::Tensor kl_context_repr;   // mean over contexts of the per-row KL
  ad::Tensor kl_weights;        // summed over both Bayesian layers
};

/// alpha * y_t + (1 - alpha) * mean_i context_labels[:, i]. context_labels
/// is [B, N, K] or [N, K] (shared by every row).
ad::Tensor mix_labels(const ad::Tensor& y_t, const ad::Tensor& context_labels, double alpha);

/// Sum over unordered pairs j < k of ||out_j - out_k||^2; 0 when M = 1.
ad::Tensor weight_func_reg(const ad::Tensor& per_weight_probs);

LossBreakdown total_loss(const CibForward& fwd, const ad::Tensor& mixed_labels, const ExperimentConfig& cfg);

class CIBModel final : public Classifier {
 public:
  CIBModel(const ExperimentConfig& cfg, const ad::Shape& sample_shape, std::size_t num_classes, nn::Rng& rng);

  EncodeResult encode(const ad::Tensor& images, nn::NoiseSource& noise);
  CibForward forward(const ContextBatch& batch, nn::NoiseSource& noise);

  ModelKind kind() const override { return ModelKind::cib; }
  std::size_t num_classes() const override { return last_.out_features(); }
  std::size_t contexts_per_input() const override { return static_cast<std::size_t>(cfg_.N); }
  LossBreakdown training_loss(const ContextBatch& batch, nn::NoiseSource& noise) override;
  ad::Tensor predict_probs(const ContextBatch& batch, nn::NoiseSource& noise) override;
  void collect(nn::ParamList& out) const override;
  void set_batchnorm_mode(nn::BatchNormMode m) override { encoder_.set_mode(m); }
  void clamp_log_var() override;

  const ExperimentConfig& config() const { return cfg_; }
  ExperimentConfig& mutable_config() { return cfg_; }
  Encoder& encoder() { return encoder_; }
  nn::BayesianLinear& first() { return first_; }
  nn::Linear& hidden() { return hidden_; }
  nn::BayesianLinear& last() { return last_; }

 private:
  EncoderOutput encode_all(const ContextBatch& batch, std::size_t bn);

  ExperimentConfig cfg_;
  Encoder encoder_;
  nn::BayesianLinear first_;  // d -> h
  nn::Linear hidden_;         // h -> h
  nn::BayesianLinear last_;   // h -> K
};

}  // namespace cib::model

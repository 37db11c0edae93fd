// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Common interface the trainer uses for the CIB model and the baselines.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cib/autodiff/tensor.hpp"
#include "cib/model/config.hpp"
#include "cib/nn/layers.hpp"
#include "cib/nn/random.hpp"

namespace cib::model {

/// Inputs with their one-hot labels and N context samples per input.
struct ContextBatch {
  ad::Tensor inputs;          // [B, ...]
  ad::Tensor input_labels;    // [B, K]
  ad::Tensor contexts;        // [B, N, ...]; undefined when N = 0
  ad::Tensor context_labels;  // [B, N, K]

  std::size_t batch_size() const { return inputs.size(0); }
  std::size_t num_contexts() const { return contexts.defined() ? contexts.size(1) : 0; }
  /// Throws ad::ShapeError on inconsistent shapes or label rows not summing to 1.
  void validate(std::size_t num_classes) const;
};

struct LossTerm {
  std::string name;
  double weight = 1.0;
  ad::Tensor value;  // scalar
};

/// Named, weighted loss components. total is built as
/// ((t0 * w0 + w1 * t1) + w2 * t2) + ... in term order, so accounted_total()
/// reproduces it bit for bit.
struct LossBreakdown {
  std::vector<LossTerm> terms;
  ad::Tensor total;
  bool log_clamped = false;  // some probability under label mass hit the 1e-12 floor

  static LossBreakdown combine(std::vector<LossTerm> terms);
  double accounted_total() const;
  double value(const std::string& name) const;
};

/// -(1/B) sum_b sum_k labels[b,k] * log(max(probs[b,k], 1e-12)).
ad::Tensor clamped_cross_entropy(const ad::Tensor& probs, const ad::Tensor& labels, bool* clamped = nullptr);

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t num_classes() const = 0;
  /// Context samples each input needs (0 when the model takes none).
  virtual std::size_t contexts_per_input() const = 0;

  virtual LossBreakdown training_loss(const ContextBatch& batch, nn::NoiseSource& noise) = 0;
  /// Class probabilities [B, K] without label mixing.
  virtual ad::Tensor predict_probs(const ContextBatch& batch, nn::NoiseSource& noise) = 0;

  virtual void collect(nn::ParamList& out) const = 0;
  virtual void set_batchnorm_mode(nn::BatchNormMode m) = 0;
  virtual void clamp_log_var() {}

  nn::ParamList parameters() const {
    nn::ParamList out;
    collect(out);
    return out;
  }
};

/// Argmax per row; ties go to the lowest class index.
std::vector<std::size_t> argmax_rows(const ad::Tensor& probs);

}  // namespace cib::model

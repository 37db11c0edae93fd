// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared image/vector encoder. The variational form emits (mean, log_var);
// the point form only the mean.

#pragma once

#include <string>
#include <vector>

#include "cib/model/config.hpp"
#include "cib/nn/layers.hpp"

namespace cib::model {

struct EncoderOutput {
  ad::Tensor mean;     // [B, d]
  ad::Tensor log_var;  // [B, d], clamped; undefined for point encoders
};

class Encoder {
 public:
  Encoder() = default;
  /// sample_shape excludes the batch axis: {D} for mlp, {C, H, W} for cnn.
  Encoder(EncoderKind kind, const ad::Shape& sample_shape, std::size_t hidden, std::size_t repr_dim,
          std::size_t conv_channels, nn::Rng& rng, bool variational);

  /// x: [B, sample_shape...].
  EncoderOutput forward(const ad::Tensor& x);
  void collect(const std::string& prefix, nn::ParamList& out) const;
  void set_mode(nn::BatchNormMode m);
  nn::BatchNormMode mode() const { return norms_.empty() ? nn::BatchNormMode::train : norms_[0].mode(); }

  EncoderKind kind() const { return kind_; }
  const ad::Shape& sample_shape() const { return sample_shape_; }
  std::size_t repr_dim() const { return mean_head_.out_features(); }
  bool variational() const { return variational_; }
  const nn::Linear& log_var_head() const { return log_var_head_; }

 private:
  EncoderKind kind_ = EncoderKind::mlp;
  ad::Shape sample_shape_;
  bool variational_ = true;
  std::vector<nn::Linear> dense_;  // mlp: two hidden layers; cnn: one dense layer
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::BatchNorm> norms_;
  nn::Linear mean_head_;
  nn::Linear log_var_head_;
};

/// Row-wise KL of N(mean, exp(log_var)) to N(0, I), summed over the last
/// axis. Returns [B].
ad::Tensor kl_per_row(const ad::Tensor& mean, const ad::Tensor& log_var);

}  // namespace cib::model

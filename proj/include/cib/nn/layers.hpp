// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Point-estimate layers, batch normalization with an o.o.d statistics mode,
// and mean-field Gaussian layers sampled with the reparameterization trick.

#pragma once

#include <string>
#include <vector>

#include "cib/autodiff/tensor.hpp"
#include "cib/nn/random.hpp"

namespace cib::nn {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

enum class ParamKind { weight, log_var, buffer };

/// Named handle onto a model tensor. Copies share storage with the model.
struct ParamRef {
  std::string name;
  ad::Tensor tensor;
  ParamKind kind = ParamKind::weight;

  bool trainable() const { return kind != ParamKind::buffer; }
};
using ParamList = std::vector<ParamRef>;

/// Diagonal Gaussian q = N(mean, exp(log_var)) against a N(0, 1) prior.
struct GaussianVariational {
  ad::Tensor mean;
  ad::Tensor log_var;

  GaussianVariational() = default;
  GaussianVariational(ad::Tensor mean, ad::Tensor log_var);
  /// Means ~ N(0, 1), log_var = init_log_var.
  static GaussianVariational init(const ad::Shape& shape, Rng& rng, double init_log_var);

  void clamp_log_var();
  void collect(const std::string& prefix, ParamList& out) const;
};

/// mean + exp(0.5 * log_var) * noise; differentiable in mean and log_var.
ad::Tensor sample_gaussian(const GaussianVariational& params, const ad::Tensor& noise);
ad::Tensor sample_gaussian(const ad::Tensor& mean, const ad::Tensor& log_var, const ad::Tensor& noise);

/// Sum over elements of 0.5 * (mean^2 + var - log(var) - 1).
ad::Tensor kl_to_standard_normal(const GaussianVariational& params);
ad::Tensor kl_to_standard_normal(const ad::Tensor& mean, const ad::Tensor& log_var);

/// y = x W^T + b for x of shape [n, in].
ad::Tensor affine(const ad::Tensor& x, const ad::Tensor& weight, const ad::Tensor& bias);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Linear(ad::Tensor weight, ad::Tensor bias);

  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  std::size_t in_features() const { return weight_.size(1); }
  std::size_t out_features() const { return weight_.size(0); }
  const ad::Tensor& weight() const { return weight_; }
  const ad::Tensor& bias() const { return bias_; }

 private:
  ad::Tensor weight_;  // [out, in]
  ad::Tensor bias_;    // [out]
};

/// One realization of a Bayesian linear layer's parameters.
struct LinearDraw {
  ad::Tensor weight;
  ad::Tensor bias;
};

class BayesianLinear {
 public:
  BayesianLinear() = default;
  BayesianLinear(std::size_t in, std::size_t out, Rng& rng, double init_log_var = -6.0);
  BayesianLinear(GaussianVariational weight, GaussianVariational bias);

  LinearDraw draw(NoiseSource& noise) const;
  LinearDraw draw(const ad::Tensor& weight_noise, const ad::Tensor& bias_noise) const;
  /// Draws one realization (shared by every row of x) and applies it.
  ad::Tensor forward(const ad::Tensor& x, NoiseSource& noise) const;
  ad::Tensor forward_with(const ad::Tensor& x, const LinearDraw& w) const;
  /// Point-estimate forward with the posterior means.
  ad::Tensor forward_mean(const ad::Tensor& x) const;

  ad::Tensor kl() const;
  void clamp_log_var();
  void collect(const std::string& prefix, ParamList& out) const;

  std::size_t in_features() const { return weight_.mean.size(1); }
  std::size_t out_features() const { return weight_.mean.size(0); }
  const GaussianVariational& weight() const { return weight_; }
  const GaussianVariational& bias() const { return bias_; }

 private:
  GaussianVariational weight_;  // [out, in]
  GaussianVariational bias_;    // [out]
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t padding,
         Rng& rng);

  ad::Tensor forward(const ad::Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  std::size_t out_channels() const { return weight_.size(0); }

 private:
  ad::Tensor weight_;  // [O, C, K, K]
  ad::Tensor bias_;
  std::size_t padding_ = 0;
};

enum class BatchNormMode { train, eval_iid, eval_ood };

/// Per-channel normalization for [B, C] or [B, C, H, W] inputs. In train and
/// eval_ood modes the current batch statistics are used; eval_iid uses the
/// running statistics accumulated during training.
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  ad::Tensor forward(const ad::Tensor& x);
  void collect(const std::string& prefix, ParamList& out) const;

  BatchNormMode mode() const { return mode_; }
  void set_mode(BatchNormMode m) { mode_ = m; }
  double momentum() const { return momentum_; }
  double eps() const { return eps_; }
  ad::Tensor& running_mean() { return running_mean_; }
  ad::Tensor& running_var() { return running_var_; }
  ad::Tensor& scale() { return scale_; }
  ad::Tensor& shift() { return shift_; }

 private:
  ad::Tensor running_mean_;
  ad::Tensor running_var_;
  ad::Tensor scale_;
  ad::Tensor shift_;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  BatchNormMode mode_ = BatchNormMode::train;
};

class BatchNormError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace cib::nn

// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "cib/autodiff/ops.hpp"

namespace cib::nn {

using ad::Shape;
using ad::Tensor;

GaussianVariational::GaussianVariational(Tensor m, Tensor lv) : mean(std::move(m)), log_var(std::move(lv)) {
  if (mean.shape() != log_var.shape()) {
    throw ad::ShapeError("GaussianVariational", mean.shape(), log_var.shape(),
                         "mean and log_var must share a shape");
  }
}

GaussianVariational GaussianVariational::init(const Shape& shape, Rng& rng, double init_log_var) {
  Tensor m = normal_tensor(shape, rng);
  Tensor lv = Tensor::full(shape, std::clamp(init_log_var, kLogVarMin, kLogVarMax));
  m.set_requires_grad();
  lv.set_requires_grad();
  return {std::move(m), std::move(lv)};
}

void GaussianVariational::clamp_log_var() {
  for (double& v : log_var.mutable_data()) v = std::clamp(v, kLogVarMin, kLogVarMax);
}

void GaussianVariational::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".mean", mean, ParamKind::weight});
  out.push_back({prefix + ".log_var", log_var, ParamKind::log_var});
}

Tensor sample_gaussian(const Tensor& mean, const Tensor& log_var, const Tensor& noise) {
  if (noise.shape() != mean.shape()) {
    throw ad::ShapeError("sample_gaussian", mean.shape(), noise.shape(), "noise must match mean");
  }
  return ad::add(mean, ad::mul(ad::exp(ad::scale(log_var, 0.5)), noise));
}

Tensor sample_gaussian(const GaussianVariational& params, const Tensor& noise) {
  return sample_gaussian(params.mean, params.log_var, noise);
}

Tensor kl_to_standard_normal(const Tensor& mean, const Tensor& log_var) {
  if (mean.shape() != log_var.shape()) {
    throw ad::ShapeError("kl_to_standard_normal", mean.shape(), log_var.shape());
  }
  // 0.5 * sum(mean^2 + exp(lv) - lv - 1)
  Tensor terms = ad::sub(ad::add(ad::square(mean), ad::exp(log_var)), ad::add_scalar(log_var, 1.0));
  return ad::scale(ad::sum(terms), 0.5);
}

Tensor kl_to_standard_normal(const GaussianVariational& params) {
  return kl_to_standard_normal(params.mean, params.log_var);
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.dim() != 2 || x.size(1) != weight.size(1)) {
    throw ad::ShapeError("affine", x.shape(), weight.shape(), "input last dimension must equal in");
  }
  return ad::add(ad::matmul(x, ad::transpose(weight)), bias);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = uniform_tensor({out, in}, rng, -bound, bound);
  bias_ = uniform_tensor({out}, rng, -bound, bound);
  weight_.set_requires_grad();
  bias_.set_requires_grad();
}

Linear::Linear(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.dim() != 2 || bias_.dim() != 1 || bias_.size(0) != weight_.size(0)) {
    throw ad::ShapeError("Linear", weight_.shape(), bias_.shape());
  }
}

Tensor Linear::forward(const Tensor& x) const { return affine(x, weight_, bias_); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight_, ParamKind::weight});
  out.push_back({prefix + ".bias", bias_, ParamKind::weight});
}

BayesianLinear::BayesianLinear(std::size_t in, std::size_t out, Rng& rng, double init_log_var)
    : weight_(GaussianVariational::init({out, in}, rng, init_log_var)),
      bias_(GaussianVariational::init({out}, rng, init_log_var)) {}

BayesianLinear::BayesianLinear(GaussianVariational weight, GaussianVariational bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.mean.dim() != 2 || bias_.mean.dim() != 1 || bias_.mean.size(0) != weight_.mean.size(0)) {
    throw ad::ShapeError("BayesianLinear", weight_.mean.shape(), bias_.mean.shape());
  }
}

LinearDraw BayesianLinear::draw(NoiseSource& noise) const {
  Tensor wn = noise.normal(weight_.mean.shape(), NoiseStream::weights);
  Tensor bn = noise.normal(bias_.mean.shape(), NoiseStream::weights);
  return draw(wn, bn);
}

LinearDraw BayesianLinear::draw(const Tensor& weight_noise, const Tensor& bias_noise) const {
  return {sample_gaussian(weight_, weight_noise), sample_gaussian(bias_, bias_noise)};
}

Tensor BayesianLinear::forward(const Tensor& x, NoiseSource& noise) const {
  if (x.dim() != 2 || x.size(1) != in_features()) {
    throw ad::ShapeError("bayes_linear_forward", x.shape(), weight_.mean.shape(),
                         "input last dimension must equal in");
  }
  return forward_with(x, draw(noise));
}

Tensor BayesianLinear::forward_with(const Tensor& x, const LinearDraw& w) const {
  return affine(x, w.weight, w.bias);
}

Tensor BayesianLinear::forward_mean(const Tensor& x) const { return affine(x, weight_.mean, bias_.mean); }

Tensor BayesianLinear::kl() const {
  return ad::add(kl_to_standard_normal(weight_), kl_to_standard_normal(bias_));
}

void BayesianLinear::clamp_log_var() {
  weight_.clamp_log_var();
  bias_.clamp_log_var();
}

void BayesianLinear::collect(const std::string& prefix, ParamList& out) const {
  weight_.collect(prefix + ".weight", out);
  bias_.collect(prefix + ".bias", out);
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t padding, Rng& rng)
    : padding_(padding) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
  weight_ = uniform_tensor({out_channels, in_channels, kernel, kernel}, rng, -bound, bound);
  bias_ = uniform_tensor({out_channels}, rng, -bound, bound);
  weight_.set_requires_grad();
  bias_.set_requires_grad();
}

Tensor Conv2d::forward(const Tensor& x) const { return ad::conv2d(x, weight_, bias_, padding_); }

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight_, ParamKind::weight});
  out.push_back({prefix + ".bias", bias_, ParamKind::weight});
}

BatchNorm::BatchNorm(std::size_t channels, double momentum, double eps)
    : running_mean_(Tensor::zeros({channels})),
      running_var_(Tensor::full({channels}, 1.0)),
      scale_(Tensor::full({channels}, 1.0)),
      shift_(Tensor::zeros({channels})),
      momentum_(momentum),
      eps_(eps) {
  scale_.set_requires_grad();
  shift_.set_requires_grad();
}

Tensor BatchNorm::forward(const Tensor& x) {
  const std::size_t channels = scale_.numel();
  const bool image = x.dim() == 4;
  if (!(x.dim() == 2 || image) || x.size(1) != channels) {
    throw ad::ShapeError("batchnorm_forward", x.shape(), {channels}, "expected [B,C] or [B,C,H,W]");
  }
  const Shape stat_shape = image ? Shape{1, channels, 1, 1} : Shape{1, channels};
  const std::vector<std::size_t> axes = image ? std::vector<std::size_t>{0, 2, 3}
                                              : std::vector<std::size_t>{0};
  Tensor centered;
  Tensor inv_std;
  if (mode_ == BatchNormMode::eval_iid) {
    centered = ad::sub(x, ad::reshape(running_mean_.detach(), stat_shape));
    inv_std = ad::pow(ad::add_scalar(ad::reshape(running_var_.detach(), stat_shape), eps_), -0.5);
  } else {
    if (x.size(0) < 2) {
      throw BatchNormError("batchnorm_forward: batch statistics need a batch of at least 2, got " +
                           std::to_string(x.size(0)));
    }
    Tensor mu = ad::mean(x, axes, true);
    centered = ad::sub(x, mu);
    Tensor var = ad::mean(ad::square(centered), axes, true);
    inv_std = ad::pow(ad::add_scalar(var, eps_), -0.5);
    if (mode_ == BatchNormMode::train) {
      const double n = static_cast<double>(x.numel() / channels);
      auto rm = running_mean_.mutable_data();
      auto rv = running_var_.mutable_data();
      for (std::size_t c = 0; c < channels; ++c) {
        rm[c] = (1.0 - momentum_) * rm[c] + momentum_ * mu.at(c);
        rv[c] = (1.0 - momentum_) * rv[c] + momentum_ * var.at(c) * n / (n - 1.0);
      }
    }
  }
  Tensor normalized = ad::mul(centered, inv_std);
  return ad::add(ad::mul(normalized, ad::reshape(scale_, stat_shape)), ad::reshape(shift_, stat_shape));
}

void BatchNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".scale", scale_, ParamKind::weight});
  out.push_back({prefix + ".shift", shift_, ParamKind::weight});
  out.push_back({prefix + ".running_mean", running_mean_, ParamKind::buffer});
  out.push_back({prefix + ".running_var", running_var_, ParamKind::buffer});
}

}  // namespace cib::nn

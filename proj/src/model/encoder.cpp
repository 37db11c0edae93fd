// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/model/encoder.hpp"

#include <algorithm>

#include "cib/autodiff/ops.hpp"

namespace cib::model {

using ad::Shape;
using ad::Tensor;

Encoder::Encoder(EncoderKind kind, const Shape& sample_shape, std::size_t hidden, std::size_t repr_dim,
                 std::size_t conv_channels, nn::Rng& rng, bool variational)
    : kind_(kind), sample_shape_(sample_shape), variational_(variational) {
  if (kind == EncoderKind::mlp) {
    const std::size_t in = ad::shape_numel(sample_shape);
    dense_.emplace_back(in, hidden, rng);
    norms_.emplace_back(hidden);
    dense_.emplace_back(hidden, hidden, rng);
    norms_.emplace_back(hidden);
  } else {
    if (sample_shape.size() != 3 || sample_shape[1] % 4 != 0 || sample_shape[2] % 4 != 0) {
      throw ad::ShapeError("Encoder", sample_shape, {}, "cnn encoder needs [C,H,W] with H and W divisible by 4");
    }
    const std::size_t c = conv_channels;
    convs_.emplace_back(sample_shape[0], c, 3, 1, rng);
    norms_.emplace_back(c);
    convs_.emplace_back(c, 2 * c, 3, 1, rng);
    norms_.emplace_back(2 * c);
    const std::size_t flat = 2 * c * (sample_shape[1] / 4) * (sample_shape[2] / 4);
    dense_.emplace_back(flat, hidden, rng);
  }
  mean_head_ = nn::Linear(hidden, repr_dim, rng);
  if (variational) log_var_head_ = nn::Linear(hidden, repr_dim, rng);
}

EncoderOutput Encoder::forward(const Tensor& x) {
  if (x.dim() != sample_shape_.size() + 1 ||
      !std::equal(sample_shape_.begin(), sample_shape_.end(), x.shape().begin() + 1)) {
    throw ad::ShapeError("encode", x.shape(), sample_shape_, "input must be [B, sample_shape...]");
  }
  const std::size_t batch = x.size(0);
  Tensor h;
  if (kind_ == EncoderKind::mlp) {
    h = ad::reshape(x, {batch, ad::shape_numel(sample_shape_)});
    for (std::size_t i = 0; i < dense_.size(); ++i) h = ad::silu(norms_[i].forward(dense_[i].forward(h)));
  } else {
    h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      h = ad::max_pool2d(ad::silu(norms_[i].forward(convs_[i].forward(h))), 2);
    }
    h = ad::reshape(h, {batch, h.numel() / batch});
    h = ad::silu(dense_[0].forward(h));
  }
  EncoderOutput out;
  out.mean = mean_head_.forward(h);
  if (variational_) out.log_var = ad::clamp(log_var_head_.forward(h), nn::kLogVarMin, nn::kLogVarMax);
  return out;
}

void Encoder::collect(const std::string& prefix, nn::ParamList& out) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
  for (std::size_t i = 0; i < dense_.size(); ++i) dense_[i].collect(prefix + ".dense" + std::to_string(i), out);
  for (std::size_t i = 0; i < norms_.size(); ++i) norms_[i].collect(prefix + ".norm" + std::to_string(i), out);
  mean_head_.collect(prefix + ".mean_head", out);
  if (variational_) log_var_head_.collect(prefix + ".log_var_head", out);
}

void Encoder::set_mode(nn::BatchNormMode m) {
  for (auto& n : norms_) n.set_mode(m);
}

Tensor kl_per_row(const Tensor& mean, const Tensor& log_var) {
  if (mean.shape() != log_var.shape() || mean.dim() != 2) {
    throw ad::ShapeError("kl_per_row", mean.shape(), log_var.shape());
  }
  Tensor terms = ad::sub(ad::add(ad::square(mean), ad::exp(log_var)), ad::add_scalar(log_var, 1.0));
  return ad::scale(ad::sum(terms, 1), 0.5);
}

}  // namespace cib::model

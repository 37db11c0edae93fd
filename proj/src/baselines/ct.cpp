// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/baselines/ct.hpp"

#include "cib/autodiff/ops.hpp"
#include "cib/common/kv.hpp"

namespace cib::baselines {

using ad::Shape;
using ad::Tensor;

model::LossBreakdown ct_loss(const Tensor& probs, const Tensor& labels, const Tensor& recon_loss, const Tensor& kl,
                             double recon_weight, double kl_weight) {
  bool clamped = false;
  Tensor ce = model::clamped_cross_entropy(probs, labels, &clamped);
  model::LossBreakdown out = model::LossBreakdown::combine({
      {"cross_entropy", 1.0, ce},
      {"recon", recon_weight, recon_loss},
      {"kl", kl_weight, kl},
  });
  out.log_clamped = clamped;
  return out;
}

CTModel::CTModel(const model::ExperimentConfig& cfg, const Shape& sample_shape, std::size_t num_classes, nn::Rng& rng)
    : cfg_(cfg), sample_shape_(sample_shape) {
  cfg_.validate();
  if (num_classes < 2) throw io::FieldError("num_classes", "need at least 2 classes");
  const auto d = static_cast<std::size_t>(cfg.repr_dim);
  const auto h = static_cast<std::size_t>(cfg.hidden);
  const auto eh = static_cast<std::size_t>(cfg.encoder_hidden);
  const std::size_t flat = ad::shape_numel(sample_shape);
  encoder_ = model::Encoder(cfg.encoder, sample_shape, eh, d, static_cast<std::size_t>(cfg.conv_channels), rng, true);
  dec_hidden_ = nn::Linear(d, eh, rng);
  dec_out_ = nn::Linear(eh, flat, rng);
  layers_.emplace_back(flat + d, h, rng);
  for (int i = 0; i < 3; ++i) layers_.emplace_back(h, h, rng);
  layers_.emplace_back(h, num_classes, rng);
}

Tensor CTModel::decode(const Tensor& r) {
  Tensor out = dec_out_.forward(ad::silu(dec_hidden_.forward(r)));
  Shape shape = sample_shape_;
  shape.insert(shape.begin(), r.size(0));
  return ad::reshape(out, shape);
}


CtForward CTModel::forward(const model::ContextBatch& batch, nn::NoiseSource& noise) {
  batch.validate(num_classes());
  const std::size_t b = batch.batch_size();
  const std::size_t n = batch.num_contexts();
  if (n == 0) throw io::FieldError("N", "the ct model needs at least one context sample");
  const std::size_t flat = ad::shape_numel(sample_shape_);
  const std::size_t d = encoder_.repr_dim();
  const std::size_t k = num_classes();

  model::EncoderOutput e = encoder_.forward(batch.inputs);
  Tensor eps = noise.normal(e.mean.shape(), nn::NoiseStream::encoder);
  Tensor r = nn::sample_gaussian(e.mean, e.log_var, eps);
  CtForward out;
  out.kl = ad::mean(model::kl_per_row(e.mean, e.log_var));
  out.recon_loss = ad::mean(ad::square(ad::sub(decode(r), batch.inputs)));

  Tensor ctx = ad::reshape(batch.contexts, {b * n, flat});
  Tensor rr = ad::reshape(ad::broadcast_to(ad::reshape(r, {b, 1, d}), {b, n, d}), {b * n, d});
  Tensor h = ad::concat({ctx, rr}, 1);
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = ad::silu(layers_[i].forward(h));
  Tensor p = ad::softmax(layers_.back().forward(h));
  out.probs = ad::mean(ad::reshape(p, {b, n, k}), 1);
  return out;
}

model::LossBreakdown CTModel::pretrain_loss(const Tensor& inputs, nn::NoiseSource& noise) {
  model::EncoderOutput e = encoder_.forward(inputs);
  Tensor eps = noise.normal(e.mean.shape(), nn::NoiseStream::encoder);
  Tensor r = nn::sample_gaussian(e.mean, e.log_var, eps);
  Tensor recon = ad::mean(ad::square(ad::sub(decode(r), inputs)));
  Tensor kl = ad::mean(model::kl_per_row(e.mean, e.log_var));
  return model::LossBreakdown::combine({{"recon", 1.0, recon}, {"kl", cfg_.kl_weight, kl}});
}

model::LossBreakdown CTModel::training_loss(const model::ContextBatch& batch, nn::NoiseSource& noise) {
  CtForward f = forward(batch, noise);
  return ct_loss(f.probs, batch.input_labels, f.recon_loss, f.kl, cfg_.recon_weight, cfg_.kl_weight);
}

Tensor CTModel::predict_probs(const model::ContextBatch& batch, nn::NoiseSource& noise) {
  return forward(batch, noise).probs;
}

void CTModel::collect(nn::ParamList& out) const {
  const std::size_t vae_begin = out.size();
  encoder_.collect("vae.encoder", out);
  dec_hidden_.collect("vae.decoder.hidden", out);
  dec_out_.collect("vae.decoder.out", out);
  if (vae_frozen_) {
    for (std::size_t i = vae_begin; i < out.size(); ++i) out[i].kind = nn::ParamKind::buffer;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect("inference." + std::to_string(i), out);
}

}  // namespace cib::baselines

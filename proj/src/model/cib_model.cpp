// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/model/cib_model.hpp"

#include <stdexcept>

#include "cib/autodiff/ops.hpp"
#include "cib/common/kv.hpp"

namespace cib::model {

using ad::Shape;
using ad::Tensor;

Tensor mix_labels(const Tensor& y_t, const Tensor& context_labels, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw io::FieldError("alpha", "must be in [0, 1], got " + io::format_double(alpha));
  }
  if (y_t.dim() != 2) throw ad::ShapeError("mix_labels", y_t.shape(), {}, "y_t must be [B, K]");
  const std::size_t b = y_t.size(0);
  const std::size_t k = y_t.size(1);
  const bool shared = context_labels.dim() == 2;
  if (shared ? context_labels.size(1) != k
             : (context_labels.dim() != 3 || context_labels.size(0) != b || context_labels.size(2) != k)) {
    throw ad::ShapeError("mix_labels", y_t.shape(), context_labels.shape(), "context labels must be [B,N,K] or [N,K]");
  }
  const std::size_t n = context_labels.size(shared ? 0 : 1);
  if (n == 0) throw ad::ShapeError("mix_labels", y_t.shape(), context_labels.shape(), "N must be >= 1");
  const auto y = y_t.data();
  const auto c = context_labels.data();
  std::vector<double> out(b * k);
  for (std::size_t r = 0; r < b; ++r) {
    const double* base = c.data() + (shared ? 0 : r * n * k);
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += base[i * k + j];
      out[r * k + j] = alpha * y[r * k + j] + (1.0 - alpha) * (s / static_cast<double>(n));
    }
  }
  return Tensor::from({b, k}, std::move(out));
}

Tensor weight_func_reg(const Tensor& per_weight_probs) { return ad::pairwise_sq_dist_sum(per_weight_probs); }

LossBreakdown total_loss(const CibForward& fwd, const Tensor& mixed_labels, const ExperimentConfig& cfg) {
  bool clamped = false;
  Tensor ce = clamped_cross_entropy(fwd.probs, mixed_labels, &clamped);
  LossBreakdown out = LossBreakdown::combine({
      {"cross_entropy", 1.0, ce},
      {"weight_func", cfg.beta, weight_func_reg(fwd.per_weight_probs)},
      {"kl_input_repr", cfg.gamma, fwd.kl_input_repr},
      {"kl_context_repr", cfg.mu_c, fwd.kl_context_repr},
      {"kl_weights", cfg.epsilon, fwd.kl_weights},
  });
  out.log_clamped = clamped;
  return out;
}

CIBModel::CIBModel(const ExperimentConfig& cfg, const Shape& sample_shape, std::size_t num_classes, nn::Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  if (num_classes < 2) throw io::FieldError("num_classes", "need at least 2 classes");
  const auto d = static_cast<std::size_t>(cfg.repr_dim);
  const auto h = static_cast<std::size_t>(cfg.hidden);
  encoder_ = Encoder(cfg.encoder, sample_shape, static_cast<std::size_t>(cfg.encoder_hidden), d,
                     static_cast<std::size_t>(cfg.conv_channels), rng, true);
  first_ = nn::BayesianLinear(d, h, rng, cfg.init_log_var);
  hidden_ = nn::Linear(h, h, rng);
  last_ = nn::BayesianLinear(h, num_classes, rng, cfg.init_log_var);
}

EncodeResult CIBModel::encode(const Tensor& images, nn::NoiseSource& noise) {
  EncoderOutput e = encoder_.forward(images);
  Tensor eps = noise.normal(e.mean.shape(), nn::NoiseStream::encoder);
  return {nn::sample_gaussian(e.mean, e.log_var, eps), nn::kl_to_standard_normal(e.mean, e.log_var)};
}

EncoderOutput CIBModel::encode_all(const ContextBatch& batch, std::size_t bn) {
  Shape flat = batch.contexts.shape();
  flat.erase(flat.begin());
  flat[0] = bn;
  Tensor ctx = ad::reshape(batch.contexts, flat);
  if (encoder_.mode() == nn::BatchNormMode::train) {
    // One normalization pass over inputs and contexts together.
    return encoder_.forward(ad::concat({batch.inputs, ctx}, 0));
  }
  // Contexts come from the training split, so they keep the running
  // statistics even when the inputs use their own batch statistics.
  const nn::BatchNormMode mode = encoder_.mode();
  EncoderOutput in = encoder_.forward(batch.inputs);
  encoder_.set_mode(nn::BatchNormMode::eval_iid);
  EncoderOutput cx;
  try {
    cx = encoder_.forward(ctx);
  } catch (...) {
    encoder_.set_mode(mode);
    throw;
  }
  encoder_.set_mode(mode);
  return {ad::concat({in.mean, cx.mean}, 0), ad::concat({in.log_var, cx.log_var}, 0)};
}

CibForward CIBModel::forward(const ContextBatch& batch, nn::NoiseSource& noise) {
  batch.validate(num_classes());
  const std::size_t b = batch.batch_size();
  const std::size_t n = batch.num_contexts();
  if (n == 0) throw io::FieldError("N", "the cib model needs at least one context sample");
  const std::size_t m = static_cast<std::size_t>(cfg_.M);
  const std::size_t l_count = static_cast<std::size_t>(cfg_.L);
  const std::size_t d = encoder_.repr_dim();
  const std::size_t k = num_classes();

  EncoderOutput enc = encode_all(batch, b * n);
  Tensor kl_rows = kl_per_row(enc.mean, enc.log_var);
  CibForward out;
  out.kl_input_repr = ad::mean(ad::slice(kl_rows, 0, b));
  out.kl_context_repr = ad::mean(ad::slice(kl_rows, b, b + b * n));
  out.kl_weights = ad::add(first_.kl(), last_.kl());

  // z[l, b, i] = r_l[b] + r'_l[b, i]
  std::vector<Tensor> zs;
  for (std::size_t l = 0; l < l_count; ++l) {
    Tensor eps = noise.normal(enc.mean.shape(), nn::NoiseStream::encoder);
    Tensor r = nn::sample_gaussian(enc.mean, enc.log_var, eps);
    Tensor r_in = ad::reshape(ad::slice(r, 0, b), {b, 1, d});
    Tensor r_ctx = ad::reshape(ad::slice(r, b, b + b * n), {b, n, d});
    zs.push_back(ad::reshape(ad::add(r_in, r_ctx), {b * n, d}));
  }
  Tensor z = l_count == 1 ? zs[0] : ad::concat(zs, 0);

  std::vector<Tensor> per_weight;
  per_weight.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    // One draw per j, shared across all contexts and representation samples.
    nn::LinearDraw w1 = first_.draw(noise);
    nn::LinearDraw w3 = last_.draw(noise);
    Tensor h = ad::silu(first_.forward_with(z, w1));
    h = ad::silu(hidden_.forward(h));
    Tensor p = ad::softmax(last_.forward_with(h, w3));
    p = ad::reshape(p, {l_count, b, n, k});
    per_weight.push_back(ad::mean(p, {0, 2}));
  }
  out.per_weight_probs = ad::stack(per_weight);
  out.probs = ad::mean(out.per_weight_probs, 0);
  return out;
}

LossBreakdown CIBModel::training_loss(const ContextBatch& batch, nn::NoiseSource& noise) {
  CibForward fwd = forward(batch, noise);
  return total_loss(fwd, mix_labels(batch.input_labels, batch.context_labels, cfg_.alpha), cfg_);
}

Tensor CIBModel::predict_probs(const ContextBatch& batch, nn::NoiseSource& noise) {
  return forward(batch, noise).probs;
}

void CIBModel::collect(nn::ParamList& out) const {
  encoder_.collect("encoder", out);
  first_.collect("inference.first", out);
  hidden_.collect("inference.hidden", out);
  last_.collect("inference.last", out);
}

void CIBModel::clamp_log_var() {
  first_.clamp_log_var();
  last_.clamp_log_var();
}

}  // namespace cib::model

// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/baselines/point.hpp"

#include <stdexcept>

#include "cib/autodiff/ops.hpp"
#include "cib/common/kv.hpp"

namespace cib::baselines {

using ad::Tensor;

PointModel::PointModel(const model::ExperimentConfig& cfg, const ad::Shape& sample_shape, std::size_t num_classes,
                       nn::Rng& rng) {
  cfg.validate();
  if (num_classes < 2) throw io::FieldError("num_classes", "need at least 2 classes");
  const auto d = static_cast<std::size_t>(cfg.repr_dim);
  const auto h = static_cast<std::size_t>(cfg.hidden);
  encoder_ = model::Encoder(cfg.encoder, sample_shape, static_cast<std::size_t>(cfg.encoder_hidden), d,
                            static_cast<std::size_t>(cfg.conv_channels), rng, false);
  first_ = nn::Linear(d, h, rng);
  hidden_ = nn::Linear(h, h, rng);
  last_ = nn::Linear(h, num_classes, rng);
}

Tensor PointModel::forward(const Tensor& inputs) {
  Tensor h = encoder_.forward(inputs).mean;
  h = ad::silu(first_.forward(h));
  h = ad::silu(hidden_.forward(h));
  return ad::softmax(last_.forward(h));
}

model::LossBreakdown PointModel::training_loss(const model::ContextBatch& batch, nn::NoiseSource&) {
  batch.validate(num_classes());
  bool clamped = false;
  Tensor ce = model::clamped_cross_entropy(forward(batch.inputs), batch.input_labels, &clamped);
  model::LossBreakdown out = model::LossBreakdown::combine({{"cross_entropy", 1.0, ce}});
  out.log_clamped = clamped;
  return out;
}

Tensor PointModel::predict_probs(const model::ContextBatch& batch, nn::NoiseSource&) {
  return forward(batch.inputs);
}

void PointModel::collect(nn::ParamList& out) const {
  encoder_.collect("encoder", out);
  first_.collect("classifier.first", out);
  hidden_.collect("classifier.hidden", out);
  last_.collect("classifier.last", out);
}

namespace {

Tensor& find(const nn::ParamList& params, const std::string& name) {
  for (const auto& p : params) {
    if (p.name == name) return const_cast<Tensor&>(p.tensor);
  }
  throw std::out_of_range("copy_collapsed: no parameter " + name);
}

void copy_scaled(Tensor& dst, const Tensor& src, double factor) {
  if (dst.shape() != src.shape()) throw ad::ShapeError("copy_collapsed", dst.shape(), src.shape());
  auto d = dst.mutable_data();
  const auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = s[i] * factor;
}

}  // namespace

void copy_collapsed(model::CIBModel& cib, PointModel& point) {
  const nn::ParamList cp = cib.parameters();
  const nn::ParamList pp = point.parameters();
  for (const auto& p : cp) {
    if (p.kind == nn::ParamKind::log_var) {
      for (double& v : find(cp, p.name).mutable_data()) v = nn::kLogVarMin;
    }
  }
  for (double& v : find(cp, "encoder.log_var_head.weight").mutable_data()) v = 0.0;
  for (double& v : find(cp, "encoder.log_var_head.bias").mutable_data()) v = nn::kLogVarMin;
  for (const auto& p : pp) {
    if (p.name.rfind("encoder.", 0) == 0) copy_scaled(find(pp, p.name), find(cp, p.name), 1.0);
  }
  copy_scaled(find(pp, "classifier.first.weight"), find(cp, "inference.first.weight.mean"), 2.0);
  copy_scaled(find(pp, "classifier.first.bias"), find(cp, "inference.first.bias.mean"), 1.0);
  copy_scaled(find(pp, "classifier.hidden.weight"), find(cp, "inference.hidden.weight"), 1.0);
  copy_scaled(find(pp, "classifier.hidden.bias"), find(cp, "inference.hidden.bias"), 1.0);
  copy_scaled(find(pp, "classifier.last.weight"), find(cp, "inference.last.weight.mean"), 1.0);
  copy_scaled(find(pp, "classifier.last.bias"), find(cp, "inference.last.bias.mean"), 1.0);
}

}  // namespace cib::baselines

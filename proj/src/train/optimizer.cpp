// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/train/optimizer.hpp"

#include <cmath>
#include <string>

namespace cib::train {

Optimizer::Optimizer(model::OptimizerKind kind, double lr, double weight_decay) {
  state_.kind = kind;
  state_.lr = lr;
  state_.weight_decay = weight_decay;
}

void Optimizer::step(const nn::ParamList& params) {
  std::vector<const nn::ParamRef*> trainable;
  for (const auto& p : params) {
    if (p.trainable()) trainable.push_back(&p);
  }
  for (const auto* p : trainable) {
    if (!p->tensor.has_grad()) throw OptimizerError("optimizer step: parameter " + p->name + " has no gradient");
  }
  if (state_.m.empty()) {
    for (const auto* p : trainable) {
      state_.m.emplace_back(p->tensor.numel(), 0.0);
      state_.v.emplace_back(p->tensor.numel(), 0.0);
    }
  }
  if (state_.m.size() != trainable.size()) throw OptimizerError("optimizer step: parameter list changed");
  ++state_.step_count;
  const double lr = state_.lr;
  const double wd = state_.weight_decay;
  const double b1 = state_.beta1;
  const double b2 = state_.beta2;
  const double t = static_cast<double>(state_.step_count);
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    ad::Tensor tensor = trainable[i]->tensor;
    auto theta = tensor.mutable_data();
    const auto g = tensor.grad();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    if (m.size() != theta.size()) {
      throw OptimizerError("optimizer step: moment shape mismatch for " + trainable[i]->name);
    }
    if (state_.kind == model::OptimizerKind::sgd) {
      for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= lr * (g[j] + wd * theta[j]);
      continue;
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] -= lr * wd * theta[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + state_.eps);
    }
  }
}

}  // namespace cib::train

// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// SGD and AdamW (decoupled weight decay) over a model's trainable tensors.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cib/model/config.hpp"
#include "cib/nn/layers.hpp"

namespace cib::train {

class OptimizerError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct OptimizerState {
  model::OptimizerKind kind = model::OptimizerKind::adamw;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> m;  // first moments, one per trainable tensor
  std::vector<std::vector<double>> v;  // second moments
};

class Optimizer {
 public:
  Optimizer(model::OptimizerKind kind, double lr, double weight_decay);

  /// Updates every trainable parameter from its gradient. The parameter list
  /// must be the same (same order and shapes) on every call. Throws
  /// OptimizerError when a trainable tensor has no gradient.
  void step(const nn::ParamList& params);

  const OptimizerState& state() const { return state_; }

 private:
  OptimizerState state_;
};

}  // namespace cib::train

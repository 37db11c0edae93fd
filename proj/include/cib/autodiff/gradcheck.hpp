// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cib/autodiff/tensor.hpp"

namespace cib::ad {

struct CheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = false;

  std::string summary() const;
};

/// Compares reverse-mode gradients of a scalar function of `point` against
/// central differences with step `eps`. Relative error per element is
/// |a - n| / max(|a|, |n|, 1e-6); passes iff the maximum is <= tol.
CheckReport finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                    const Tensor& point, double eps, double tol);

/// Same check, perturbing the given leaf tensors in place (restored on return).
/// `f` must rebuild its computation from the current leaf values on every call.
CheckReport finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                                    double eps, double tol);

}  // namespace cib::ad

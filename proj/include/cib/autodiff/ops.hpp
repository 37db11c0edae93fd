// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every op validates shapes and finiteness
// and, when a tape is active and an operand requires grad, records its
// backward rule.

#pragma once

#include <vector>

#include "cib/autodiff/tensor.hpp"

namespace cib::ad {

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [n,k] x [k,m]
Tensor transpose(const Tensor& a);                // 2-D only

// Elementwise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double f) { return scale(a, f); }
inline Tensor operator*(double f, const Tensor& a) { return scale(a, f); }

// Reductions.
Tensor sum(const Tensor& a);  // -> [1]
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim = false);
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim = false);
inline Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false) {
  return sum(a, std::vector<std::size_t>{axis}, keepdim);
}
inline Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false) {
  return mean(a, std::vector<std::size_t>{axis}, keepdim);
}

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor stack(const std::vector<Tensor>& parts);  // new leading axis
Tensor slice(const Tensor& a, std::size_t begin, std::size_t end);  // rows of axis 0

// Elementwise unary ops.
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor clamp(const Tensor& a, double lo, double hi);

/// Softmax over the last axis.
Tensor softmax(const Tensor& a);

/// Mean over rows of -sum_k target[b,k] * log_softmax(logits)[b,k].
/// Uses a max-shifted log-sum-exp.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target);

/// x: [B,C,H,W], weight: [O,C,K,K], bias: [O]; stride 1, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t padding);
/// Non-overlapping max pool with window and stride `kernel`.
Tensor max_pool2d(const Tensor& x, std::size_t kernel);

/// Sum over unordered pairs j<k of ||a[j] - a[k]||^2, a: [M, ...].
Tensor pairwise_sq_dist_sum(const Tensor& a);

}  // namespace cib::ad

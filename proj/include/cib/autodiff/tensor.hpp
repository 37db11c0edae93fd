// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors and the define-by-run tape used for reverse-mode
// differentiation.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cib::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Raised when operand shapes are incompatible; names the op and both shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, Shape lhs, Shape rhs, const std::string& detail = {});

  const std::string& op() const noexcept { return op_; }
  const Shape& lhs() const noexcept { return lhs_; }
  const Shape& rhs() const noexcept { return rhs_; }

 private:
  std::string op_;
  Shape lhs_;
  Shape rhs_;
};

/// Raised when an op sees or produces NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string op, std::string which);

  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty means "no gradient"
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writing through this bypasses the tape; use only on leaves.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Fresh leaf holding a copy of the data and no autodiff history.
  Tensor detach() const;
  /// Deep copy that keeps requires_grad.
  Tensor clone() const;

  const TensorImpl* id() const noexcept { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl() const noexcept { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;
  friend Tensor make_result(Shape shape, std::vector<double> data);

  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of differentiable ops executed while the tape is active
/// on the current thread. Nodes are appended in execution order, so every
/// operand of node k is produced before k.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Active tape of the calling thread, or nullptr (no recording).
  static Tape* current() noexcept;

  void record(std::shared_ptr<TensorImpl> output,
              std::vector<std::shared_ptr<TensorImpl>> inputs, BackwardFn fn);

  /// Populates grads of every requires_grad tensor reachable from `loss`.
  /// Throws if loss is not a scalar or backward already ran since reset().
  void backward(const Tensor& loss);

  void reset();
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    std::shared_ptr<TensorImpl> output;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Installs a tape as current for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording for the lifetime of the scope.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tensor make_result(Shape shape, std::vector<double> data);

}  // namespace cib::ad

// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/autodiff/tensor.hpp"

#include <sstream>

namespace cib::ad {

namespace {
thread_local Tape* g_current_tape = nullptr;
}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

ShapeError::ShapeError(std::string op, Shape lhs, Shape rhs, const std::string& detail)
    : std::invalid_argument(op + ": shape mismatch " + shape_str(lhs) + " vs " + shape_str(rhs) +
                            (detail.empty() ? "" : " (" + detail + ")")),
      op_(std::move(op)),
      lhs_(std::move(lhs)),
      rhs_(std::move(rhs)) {}

NonFiniteError::NonFiniteError(std::string op, std::string which)
    : std::runtime_error(op + ": non-finite value in " + which), op_(std::move(op)) {}

Tensor make_result(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("full", shape, {}, "dimensions must be positive");
  }
  std::vector<double> data(shape_numel(shape), value);
  return make_result(std::move(shape), std::move(data));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("from", shape, {}, "dimensions must be positive");
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("from", shape, {data.size()}, "data length must equal product(shape)");
  }
  return make_result(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) { return make_result({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw AutodiffError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::size(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("size", s, {axis}, "axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!impl_) throw AutodiffError("use of undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw AutodiffError("use of undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", shape(), {1}, "tensor is not a scalar");
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw AutodiffError("use of undefined tensor");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw AutodiffError("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_) throw AutodiffError("use of undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const { return make_result(shape(), impl_->data); }

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

Tape* Tape::current() noexcept { return g_current_tape; }

void Tape::record(std::shared_ptr<TensorImpl> output,
                  std::vector<std::shared_ptr<TensorImpl>> inputs, BackwardFn fn) {
  if (consumed_) throw AutodiffError("tape already consumed by backward(); call reset() first");
  nodes_.push_back(Node{std::move(output), std::move(inputs), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw AutodiffError("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward", loss.shape(), {1}, "loss must be a scalar");
  }
  if (consumed_) throw AutodiffError("backward called twice without reset()");
  consumed_ = true;
  if (!loss.requires_grad()) return;  // constant: nothing reachable
  if (nodes_.empty()) {
    // A leaf loss that requires grad: d loss / d loss = 1.
    loss.impl()->grad.assign(1, 1.0);
    return;
  }
  auto& seed = loss.impl()->grad;
  if (seed.empty()) seed.assign(1, 0.0);
  seed[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_current_tape) { g_current_tape = nullptr; }
NoGradScope::~NoGradScope() { g_current_tape = previous_; }

}  // namespace cib::ad

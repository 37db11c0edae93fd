// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

namespace cib::ad {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw AutodiffError(std::string(op) + ": undefined operand");
}

void check_finite_input(const Tensor& t, const char* op, const char* which) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NonFiniteError(op, which);
  }
}

void check_finite_output(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NonFiniteError(op, "output");
  }
}

Tape* recording(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::current();
  if (!tape) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

// Gradient buffer of an operand, allocated on first use; nullptr when the
// operand does not participate in differentiation.
double* grad_of(const ImplPtr& t) {
  if (!t->requires_grad) return nullptr;
  if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
  return t->grad.data();
}

Tensor finish(const char* op, Shape shape, std::vector<double> data) {
  check_finite_output(data, op);
  return make_result(std::move(shape), std::move(data));
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Visits every linear index of `shape`, passing the offsets obtained from
// two stride vectors (same rank as shape).
template <class F>
void walk(const Shape& shape, const std::vector<std::size_t>& s1,
          const std::vector<std::size_t>& s2, F&& f) {
  const std::size_t rank = shape.size();
  const std::size_t n = shape_numel(shape);
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t o1 = 0, o2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, o1, o2);
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < shape[d]) {
        o1 += s1[d];
        o2 += s2[d];
        break;
      }
      o1 -= s1[d] * (shape[d] - 1);
      o2 -= s2[d] * (shape[d] - 1);
      idx[d] = 0;
    }
  }
}

struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;
  bool same = false;
};

Broadcast plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast p;
  const std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  p.sa.assign(rank, 0);
  p.sb.assign(rank, 0);
  const auto sta = strides_of(a);
  const auto stb = strides_of(b);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ai = i + a.size() >= rank ? i + a.size() - rank : SIZE_MAX;
    const std::size_t bi = i + b.size() >= rank ? i + b.size() - rank : SIZE_MAX;
    const std::size_t da = ai == SIZE_MAX ? 1 : a[ai];
    const std::size_t db = bi == SIZE_MAX ? 1 : b[bi];
    if (da != db && da != 1 && db != 1) throw ShapeError(op, a, b, "not broadcastable");
    p.out[i] = std::max(da, db);
    if (ai != SIZE_MAX && da != 1) p.sa[i] = sta[ai];
    if (bi != SIZE_MAX && db != 1) p.sb[i] = stb[bi];
  }
  p.same = (a == b);
  return p;
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const char* op, BinOp kind, const Tensor& a, const Tensor& b) {
  require_defined(a, op);
  require_defined(b, op);
  check_finite_input(a, op, "lhs");
  check_finite_input(b, op, "rhs");
  const Broadcast plan = plan_broadcast(op, a.shape(), b.shape());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  std::vector<double> out(shape_numel(plan.out));
  auto apply = [kind](double x, double y) {
    switch (kind) {
      case BinOp::Add: return x + y;
      case BinOp::Sub: return x - y;
      default: return x * y;
    }
  };
  if (plan.same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(pa[i], pb[i]);
  } else {
    walk(plan.out, plan.sa, plan.sb,
         [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = apply(pa[ia], pb[ib]); });
  }
  Tensor result = finish(op, plan.out, std::move(out));
  if (Tape* tape = recording({&a, &b})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl(), bi = b.impl();
    tape->record(o, {ai, bi}, [o, ai, bi, plan, kind] {
      const double* g = o->grad.data();
      double* ga = grad_of(ai);
      double* gb = grad_of(bi);
      const double* va = ai->data.data();
      const double* vb = bi->data.data();
      auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
        switch (kind) {
          case BinOp::Add:
            if (ga) ga[ia] += g[i];
            if (gb) gb[ib] += g[i];
            break;
          case BinOp::Sub:
            if (ga) ga[ia] += g[i];
            if (gb) gb[ib] -= g[i];
            break;
          case BinOp::Mul:
            if (ga) ga[ia] += g[i] * vb[ib];
            if (gb) gb[ib] += g[i] * va[ia];
            break;
        }
      };
      if (plan.same) {
        for (std::size_t i = 0; i < o->data.size(); ++i) step(i, i, i);
      } else {
        walk(plan.out, plan.sa, plan.sb, step);
      }
    });
  }
  return result;
}

// Shared skeleton for elementwise unary ops: value(x) and derivative(x, y).
template <class Value, class Deriv>
Tensor unary(const char* op, const Tensor& a, Value value, Deriv deriv) {
  require_defined(a, op);
  check_finite_input(a, op, "input");
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = value(in[i]);
  Tensor result = finish(op, a.shape(), std::move(out));
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai, deriv] {
      double* ga = grad_of(ai);
      if (!ga) return;
      const double* g = o->grad.data();
      for (std::size_t i = 0; i < ai->data.size(); ++i) {
        ga[i] += g[i] * deriv(ai->data[i], o->data[i]);
      }
    });
  }
  return result;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
    throw ShapeError("matmul", a.shape(), b.shape(), "expected [n,k] x [k,m]");
  }
  check_finite_input(a, "matmul", "lhs");
  check_finite_input(b, "matmul", "rhs");
  const std::size_t n = a.size(0), k = a.size(1), m = b.size(1);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += av * brow[j];
    }
  }
  Tensor result = finish("matmul", {n, m}, std::move(out));
  if (Tape* tape = recording({&a, &b})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl(), bi = b.impl();
    tape->record(o, {ai, bi}, [o, ai, bi, n, k, m] {
      const double* g = o->grad.data();
      if (double* ga = grad_of(ai)) {
        const double* vb = bi->data.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double* grow = g + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = vb + p * m;
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (double* gb = grad_of(bi)) {
        const double* va = ai->data.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double* grow = g + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = va[i * k + p];
            if (av == 0.0) continue;
            double* gbrow = gb + p * m;
            for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.dim() != 2) throw ShapeError("transpose", a.shape(), {}, "expected a 2-D tensor");
  check_finite_input(a, "transpose", "input");
  const std::size_t r = a.size(0), c = a.size(1);
  const double* pa = a.data().data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = pa[i * c + j];
  Tensor result = finish("transpose", {c, r}, std::move(out));
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai, r, c] {
      double* ga = grad_of(ai);
      if (!ga) return;
      const double* g = o->grad.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::Mul, a, b); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  check_finite_input(a, "sum", "input");
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor result = finish("sum", {1}, {s});
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai] {
      double* ga = grad_of(ai);
      if (!ga) return;
      const double g = o->grad[0];
      for (std::size_t i = 0; i < ai->data.size(); ++i) ga[i] += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim) {
  require_defined(a, "sum_axes");
  check_finite_input(a, "sum_axes", "input");
  const Shape& in = a.shape();
  std::vector<bool> reduced(in.size(), false);
  for (auto ax : axes) {
    if (ax >= in.size()) throw ShapeError("sum_axes", in, {ax}, "axis out of range");
    reduced[ax] = true;
  }
  Shape kept;   // output shape with reduced dims set to 1
  Shape out_shape;
  for (std::size_t d = 0; d < in.size(); ++d) {
    kept.push_back(reduced[d] ? 1 : in[d]);
    if (!reduced[d] || keepdim) out_shape.push_back(reduced[d] ? 1 : in[d]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  const auto kept_strides = strides_of(kept);
  std::vector<std::size_t> map_strides(in.size());
  for (std::size_t d = 0; d < in.size(); ++d) map_strides[d] = reduced[d] ? 0 : kept_strides[d];
  const auto in_strides = strides_of(in);
  std::vector<double> out(shape_numel(kept), 0.0);
  const double* pa = a.data().data();
  walk(in, in_strides, map_strides,
       [&](std::size_t, std::size_t ii, std::size_t io) { out[io] += pa[ii]; });
  Tensor result = finish("sum_axes", out_shape, std::move(out));
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai, in, in_strides, map_strides] {
      double* ga = grad_of(ai);
      if (!ga) return;
      const double* g = o->grad.data();
      walk(in, in_strides, map_strides,
           [&](std::size_t, std::size_t ii, std::size_t io) { ga[ii] += g[io]; });
    });
  }
  return result;
}

Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim) {
  std::size_t count = 1;
  for (auto ax : axes) count *= a.size(ax);
  return scale(sum(a, axes, keepdim), 1.0 / static_cast<double>(count));
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) throw ShapeError("reshape", a.shape(), shape);
  for (auto d : shape) {
    if (d == 0) throw ShapeError("reshape", a.shape(), shape, "dimensions must be positive");
  }
  Tensor result = make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai] {
      double* ga = grad_of(ai);
      if (!ga) return;
      for (std::size_t i = 0; i < o->grad.size(); ++i) ga[i] += o->grad[i];
    });
  }
  return result;
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  require_defined(a, "broadcast_to");
  const Broadcast plan = plan_broadcast("broadcast_to", a.shape(), shape);
  if (plan.out != shape) throw ShapeError("broadcast_to", a.shape(), shape);
  const double* pa = a.data().data();
  std::vector<double> out(shape_numel(shape));
  walk(plan.out, plan.sa, plan.sb,
       [&](std::size_t i, std::size_t ia, std::size_t) { out[i] = pa[ia]; });
  Tensor result = make_result(shape, std::move(out));
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai, plan] {
      double* ga = grad_of(ai);
      if (!ga) return;
      const double* g = o->grad.data();
      walk(plan.out, plan.sa, plan.sb,
           [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += g[i]; });
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw AutodiffError("concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat", first, {axis}, "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat", first, s, "rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) throw ShapeError("concat", first, s);
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_block = out_shape[axis] * inner;
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    check_finite_input(p, "concat", "operand");
    const std::size_t block = p.shape()[axis] * inner;
    const double* src = p.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * block, src + (o + 1) * block, out.begin() + o * out_block + offset);
    }
    offsets.push_back(offset);
    offset += block;
  }
  Tensor result = make_result(out_shape, std::move(out));
  Tape* tape = Tape::current();
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape && any) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl();
    std::vector<ImplPtr> ins;
    for (const auto& p : parts) ins.push_back(p.impl());
    tape->record(o, ins, [o, ins, offsets, outer, inner, out_block, axis] {
      const double* g = o->grad.data();
      for (std::size_t k = 0; k < ins.size(); ++k) {
        double* gp = grad_of(ins[k]);
        if (!gp) continue;
        const std::size_t block = ins[k]->shape[axis] * inner;
        for (std::size_t oi = 0; oi < outer; ++oi) {
          const double* src = g + oi * out_block + offsets[k];
          for (std::size_t e = 0; e < block; ++e) gp[oi * block + e] += src[e];
        }
      }
    });
  }
  return result;
}

Tensor stack(const std::vector<Tensor>& parts) {
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    require_defined(p, "stack");
    Shape s{1};
    s.insert(s.end(), p.shape().begin(), p.shape().end());
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, 0);
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined(a, "slice");
  if (a.dim() == 0 || begin >= end || end > a.size(0)) {
    throw ShapeError("slice", a.shape(), {begin, end}, "invalid row range");
  }
  const std::size_t row = a.numel() / a.size(0);
  Shape out_shape = a.shape();
  out_shape[0] = end - begin;
  std::vector<double> out(a.data().begin() + begin * row, a.data().begin() + end * row);
  Tensor result = make_result(out_shape, std::move(out));
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai, begin, row] {
      double* ga = grad_of(ai);
      if (!ga) return;
      for (std::size_t i = 0; i < o->grad.size(); ++i) ga[begin * row + i] += o->grad[i];
    });
  }
  return result;
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
  return unary(
      "silu", a, [](double x) { return x * sigmoid(x); },
      [](double x, double) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor pow(const Tensor& a, double exponent) {
  return unary(
      "pow", a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw AutodiffError("clamp: lo must not exceed hi");
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax");
  check_finite_input(a, "softmax", "input");
  if (a.dim() == 0) throw ShapeError("softmax", a.shape(), {}, "need at least one axis");
  const std::size_t k = a.shape().back();
  const std::size_t rows = a.numel() / k;
  const double* pa = a.data().data();
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = pa + r * k;
    double* y = out.data() + r * k;
    const double mx = *std::max_element(x, x + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < k; ++j) y[j] /= z;
  }
  Tensor result = finish("softmax", a.shape(), std::move(out));
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai, rows, k] {
      double* ga = grad_of(ai);
      if (!ga) return;
      const double* g = o->grad.data();
      const double* y = o->data.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
        for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
      }
    });
  }
  return result;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target) {
  require_defined(logits, "softmax_cross_entropy");
  require_defined(target, "softmax_cross_entropy");
  if (logits.dim() != 2 || logits.shape() != target.shape()) {
    throw ShapeError("softmax_cross_entropy", logits.shape(), target.shape(),
                     "expected matching [B,K]");
  }
  check_finite_input(logits, "softmax_cross_entropy", "logits");
  check_finite_input(target, "softmax_cross_entropy", "target");
  const std::size_t b = logits.size(0), k = logits.size(1);
  const double* z = logits.data().data();
  const double* t = target.data().data();
  std::vector<double> log_probs(b * k);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const double* zr = z + r * k;
    const double mx = *std::max_element(zr, zr + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(zr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) {
      log_probs[r * k + j] = zr[j] - lse;
      loss -= t[r * k + j] * log_probs[r * k + j];
    }
  }
  loss /= static_cast<double>(b);
  Tensor result = finish("softmax_cross_entropy", {1}, {loss});
  if (Tape* tape = recording({&logits, &target})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), li = logits.impl(), ti = target.impl();
    tape->record(o, {li, ti}, [o, li, ti, log_probs, b, k] {
      const double g = o->grad[0] / static_cast<double>(b);
      const double* t = ti->data.data();
      if (double* gl = grad_of(li)) {
        for (std::size_t r = 0; r < b; ++r) {
          double mass = 0.0;
          for (std::size_t j = 0; j < k; ++j) mass += t[r * k + j];
          for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(log_probs[r * k + j]);
            gl[r * k + j] += g * (p * mass - t[r * k + j]);
          }
        }
      }
      if (double* gt = grad_of(ti)) {
        for (std::size_t i = 0; i < b * k; ++i) gt[i] -= g * log_probs[i];
      }
    });
  }
  return result;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t padding) {
  require_defined(x, "conv2d");
  require_defined(weight, "conv2d");
  require_defined(bias, "conv2d");
  if (x.dim() != 4 || weight.dim() != 4 || weight.size(1) != x.size(1) ||
      weight.size(2) != weight.size(3)) {
    throw ShapeError("conv2d", x.shape(), weight.shape(), "expected [B,C,H,W] and [O,C,K,K]");
  }
  if (bias.dim() != 1 || bias.size(0) != weight.size(0)) {
    throw ShapeError("conv2d", weight.shape(), bias.shape(), "bias must be [O]");
  }
  check_finite_input(x, "conv2d", "input");
  check_finite_input(weight, "conv2d", "weight");
  check_finite_input(bias, "conv2d", "bias");
  const std::size_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const std::size_t O = weight.size(0), K = weight.size(2);
  const long P = static_cast<long>(padding);
  if (H + 2 * padding < K || W + 2 * padding < K) {
    throw ShapeError("conv2d", x.shape(), weight.shape(), "kernel larger than padded input");
  }
  const std::size_t OH = H + 2 * padding - K + 1, OW = W + 2 * padding - K + 1;
  const double* px = x.data().data();
  const double* pw = weight.data().data();
  const double* pb = bias.data().data();
  std::vector<double> out(B * O * OH * OW);
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      double* dst = out.data() + (n * O + o) * OH * OW;
      std::fill(dst, dst + OH * OW, pb[o]);
      for (std::size_t c = 0; c < C; ++c) {
        const double* src = px + (n * C + c) * H * W;
        const double* ker = pw + (o * C + c) * K * K;
        for (std::size_t ky = 0; ky < K; ++ky) {
          for (std::size_t kx = 0; kx < K; ++kx) {
            const double wv = ker[ky * K + kx];
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const long iy = static_cast<long>(oy + ky) - P;
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              for (std::size_t ox = 0; ox < OW; ++ox) {
                const long ix = static_cast<long>(ox + kx) - P;
                if (ix < 0 || ix >= static_cast<long>(W)) continue;
                dst[oy * OW + ox] += wv * src[iy * static_cast<long>(W) + ix];
              }
            }
          }
        }
      }
    }
  }
  Tensor result = finish("conv2d", {B, O, OH, OW}, std::move(out));
  if (Tape* tape = recording({&x, &weight, &bias})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), xi = x.impl(), wi = weight.impl(), bi = bias.impl();
    tape->record(o, {xi, wi, bi}, [=] {
      const double* g = o->grad.data();
      double* gx = grad_of(xi);
      double* gw = grad_of(wi);
      double* gb = grad_of(bi);
      const double* vx = xi->data.data();
      const double* vw = wi->data.data();
      for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t oc = 0; oc < O; ++oc) {
          const double* go = g + (n * O + oc) * OH * OW;
          if (gb) {
            for (std::size_t i = 0; i < OH * OW; ++i) gb[oc] += go[i];
          }
          for (std::size_t c = 0; c < C; ++c) {
            const double* src = vx + (n * C + c) * H * W;
            double* gsrc = gx ? gx + (n * C + c) * H * W : nullptr;
            for (std::size_t ky = 0; ky < K; ++ky) {
              for (std::size_t kx = 0; kx < K; ++kx) {
                const std::size_t widx = ((oc * C + c) * K + ky) * K + kx;
                const double wv = vw[widx];
                double acc = 0.0;
                for (std::size_t oy = 0; oy < OH; ++oy) {
                  const long iy = static_cast<long>(oy + ky) - P;
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  for (std::size_t ox = 0; ox < OW; ++ox) {
                    const long ix = static_cast<long>(ox + kx) - P;
                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                    const double gv = go[oy * OW + ox];
                    const long at = iy * static_cast<long>(W) + ix;
                    acc += gv * src[at];
                    if (gsrc) gsrc[at] += gv * wv;
                  }
                }
                if (gw) gw[widx] += acc;
              }
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel) {
  require_defined(x, "max_pool2d");
  if (x.dim() != 4 || kernel == 0 || x.size(2) < kernel || x.size(3) < kernel) {
    throw ShapeError("max_pool2d", x.shape(), {kernel, kernel}, "expected [B,C,H,W] >= kernel");
  }
  check_finite_input(x, "max_pool2d", "input");
  const std::size_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const std::size_t OH = H / kernel, OW = W / kernel;
  const double* px = x.data().data();
  std::vector<double> out(B * C * OH * OW);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const double* src = px + plane * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = (oy * kernel) * W + ox * kernel;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t at = (oy * kernel + ky) * W + ox * kernel + kx;
            if (src[at] > src[best]) best = at;
          }
        }
        const std::size_t oi = plane * OH * OW + oy * OW + ox;
        out[oi] = src[best];
        argmax[oi] = plane * H * W + best;
      }
    }
  }
  Tensor result = finish("max_pool2d", {B, C, OH, OW}, std::move(out));
  if (Tape* tape = recording({&x})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), xi = x.impl();
    tape->record(o, {xi}, [o, xi, argmax] {
      double* gx = grad_of(xi);
      if (!gx) return;
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += o->grad[i];
    });
  }
  return result;
}

Tensor pairwise_sq_dist_sum(const Tensor& a) {
  require_defined(a, "pairwise_sq_dist_sum");
  if (a.dim() < 1) throw ShapeError("pairwise_sq_dist_sum", a.shape(), {}, "need [M, ...]");
  check_finite_input(a, "pairwise_sq_dist_sum", "input");
  const std::size_t m = a.size(0);
  const std::size_t e = a.numel() / m;
  const double* pa = a.data().data();
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = j + 1; k < m; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < e; ++i) {
        const double d = pa[j * e + i] - pa[k * e + i];
        s += d * d;
      }
      total += s;
    }
  }
  Tensor result = finish("pairwise_sq_dist_sum", {1}, {total});
  if (Tape* tape = recording({&a})) {
    result.impl()->requires_grad = true;
    ImplPtr o = result.impl(), ai = a.impl();
    tape->record(o, {ai}, [o, ai, m, e] {
      double* ga = grad_of(ai);
      if (!ga) return;
      const double g = o->grad[0];
      const double* pa = ai->data.data();
      for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < m; ++k) {
          if (k == j) continue;
          for (std::size_t i = 0; i < e; ++i) {
            ga[j * e + i] += 2.0 * g * (pa[j * e + i] - pa[k * e + i]);
          }
        }
      }
    });
  }
  return result;
}

}  // namespace cib::ad

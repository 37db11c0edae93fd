// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/model/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cib/autodiff/ops.hpp"

namespace cib::model {

using ad::Tensor;

namespace {

void check_label_rows(const Tensor& labels, const char* what) {
  const std::size_t k = labels.shape().back();
  const auto d = labels.data();
  for (std::size_t r = 0; r * k < d.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += d[r * k + c];
    if (std::abs(s - 1.0) > 1e-9) {
      throw ad::ShapeError(what, labels.shape(), {}, "label row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

}  // namespace

void ContextBatch::validate(std::size_t num_classes) const {
  if (!inputs.defined() || inputs.dim() < 2) throw ad::ShapeError("ContextBatch", {}, {}, "inputs must be [B, ...]");
  const std::size_t b = inputs.size(0);
  if (input_labels.shape() != ad::Shape{b, num_classes}) {
    throw ad::ShapeError("ContextBatch", input_labels.shape(), {b, num_classes}, "input_labels must be [B, K]");
  }
  check_label_rows(input_labels, "ContextBatch.input_labels");
  if (!contexts.defined()) return;
  if (contexts.dim() != inputs.dim() + 1 || contexts.size(0) != b ||
      !std::equal(inputs.shape().begin() + 1, inputs.shape().end(), contexts.shape().begin() + 2)) {
    throw ad::ShapeError("ContextBatch", contexts.shape(), inputs.shape(), "contexts must be [B, N, ...]");
  }
  const std::size_t n = contexts.size(1);
  if (n == 0) throw ad::ShapeError("ContextBatch", contexts.shape(), {}, "N must be >= 1");
  if (context_labels.shape() != ad::Shape{b, n, num_classes}) {
    throw ad::ShapeError("ContextBatch", context_labels.shape(), {b, n, num_classes},
                         "context_labels must be [B, N, K]");
  }
  check_label_rows(context_labels, "ContextBatch.context_labels");
}

LossBreakdown LossBreakdown::combine(std::vector<LossTerm> terms) {
  if (terms.empty()) throw std::invalid_argument("LossBreakdown::combine: no terms");
  LossBreakdown out;
  Tensor total = terms[0].weight == 1.0 ? terms[0].value : ad::scale(terms[0].value, terms[0].weight);
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, ad::scale(terms[i].value, terms[i].weight));
  out.terms = std::move(terms);
  out.total = std::move(total);
  return out;
}

double LossBreakdown::accounted_total() const {
  double t = terms[0].weight == 1.0 ? terms[0].value.item() : terms[0].value.item() * terms[0].weight;
  for (std::size_t i = 1; i < terms.size(); ++i) t = t + terms[i].value.item() * terms[i].weight;
  return t;
}

double LossBreakdown::value(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t.value.item();
  }
  throw std::out_of_range("LossBreakdown: no term named " + name);
}

Tensor clamped_cross_entropy(const Tensor& probs, const Tensor& labels, bool* clamped) {
  if (probs.dim() != 2 || probs.shape() != labels.shape()) {
    throw ad::ShapeError("cross_entropy", probs.shape(), labels.shape());
  }
  if (clamped) {
    *clamped = false;
    const auto p = probs.data();
    const auto y = labels.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (y[i] > 0.0 && p[i] < 1e-12) *clamped = true;
    }
  }
  Tensor logp = ad::log(ad::clamp(probs, 1e-12, 1.0));
  const double b = static_cast<double>(probs.size(0));
  return ad::scale(ad::sum(ad::mul(labels, logp)), -1.0 / b);
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
  if (probs.dim() != 2) throw ad::ShapeError("argmax_rows", probs.shape(), {}, "expected [B, K]");
  const std::size_t k = probs.size(1);
  const auto d = probs.data();
  std::vector<std::size_t> out(probs.size(0));
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (d[r * k + c] > d[r * k + best]) best = c;
    }
    out[r] = best;
  }
  return out;
}

}  // namespace cib::model

// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cib::ad {

std::string CheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_error
     << " max_abs_err=" << max_abs_error << " checked=" << checked << " worst=(tensor "
     << worst_tensor << ", index " << worst_index << ", analytic " << worst_analytic
     << ", numeric " << worst_numeric << ")";
  return os.str();
}

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  NoGradScope no_grad;
  Tensor y = f();
  if (y.numel() != 1) throw ShapeError("finite_difference_check", y.shape(), {1}, "f must be scalar");
  return y.item();
}

}  // namespace

CheckReport finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves,
                                    double eps, double tol) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw AutodiffError("finite_difference_check: eps must be in (0, 1e-2]");
  std::vector<bool> previous(leaves.size());
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    previous[t] = leaves[t].requires_grad();
    leaves[t].zero_grad();
    leaves[t].set_requires_grad(true);
  }
  std::vector<std::vector<double>> analytic(leaves.size());
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f();
    if (y.numel() != 1) {
      throw ShapeError("finite_difference_check", y.shape(), {1}, "f must be scalar");
    }
    tape.backward(y);
  }
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    if (leaves[t].has_grad()) {
      analytic[t].assign(leaves[t].grad().begin(), leaves[t].grad().end());
    } else {
      analytic[t].assign(leaves[t].numel(), 0.0);
    }
    leaves[t].zero_grad();
  }

  CheckReport report;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    auto data = leaves[t].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double up = eval_scalar(f);
      data[i] = orig - eps;
      const double down = eval_scalar(f);
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[t][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-6});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.checked == 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst_tensor = t;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      ++report.checked;
    }
  }
  for (std::size_t t = 0; t < leaves.size(); ++t) leaves[t].set_requires_grad(previous[t]);
  report.passed = report.max_rel_error <= tol;
  return report;
}

CheckReport finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                                    const Tensor& point, double eps, double tol) {
  Tensor leaf = point.detach();
  return finite_difference_check([&] { return f(leaf); }, {leaf}, eps, tol);
}

}  // namespace cib::ad

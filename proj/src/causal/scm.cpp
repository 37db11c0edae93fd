// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/causal/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cib/causal/docalculus.hpp"

namespace cib::causal {

using Id = CausalGraph::Id;

DiscreteSCM::DiscreteSCM(CausalGraph graph, std::map<std::string, int> cardinalities,
                         std::map<std::string, std::vector<double>> cpts)
    : graph_(std::move(graph)), card_(graph_.size()), cpt_(graph_.size()) {
  for (Id v = 0; v < graph_.size(); ++v) {
    const std::string& n = graph_.name(v);
    auto c = cardinalities.find(n);
    if (c == cardinalities.end()) throw ScmError("missing cardinality for " + n);
    if (c->second < 2) throw ScmError("cardinality of " + n + " must be >= 2");
    card_[v] = c->second;
  }
  for (Id v = 0; v < graph_.size(); ++v) {
    const std::string& n = graph_.name(v);
    auto t = cpts.find(n);
    if (t == cpts.end()) throw ScmError("missing CPT for " + n);
    std::size_t rows = 1;
    for (Id p : graph_.parents(v)) rows *= static_cast<std::size_t>(card_[p]);
    const std::size_t k = static_cast<std::size_t>(card_[v]);
    if (t->second.size() != rows * k) {
      throw ScmError("CPT for " + n + " has " + std::to_string(t->second.size()) + " entries, expected " +
                     std::to_string(rows * k));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double e = t->second[r * k + j];
        if (!(e >= 0.0) || !std::isfinite(e)) throw ScmError("CPT for " + n + " has an invalid entry");
        s += e;
      }
      if (std::abs(s - 1.0) > 1e-12) throw ScmError("CPT row " + std::to_string(r) + " of " + n + " does not sum to 1");
    }
    cpt_[v] = std::move(t->second);
  }
}

std::size_t DiscreteSCM::row(Id v, const std::vector<int>& assignment) const {
  std::size_t r = 0;
  for (Id p : graph_.parents(v)) r = r * static_cast<std::size_t>(card_[p]) + static_cast<std::size_t>(assignment[p]);
  return r;
}

DiscreteSCM random_scm(const CausalGraph& g, std::mt19937_64& rng, int min_card, int max_card, bool deterministic) {
  std::uniform_int_distribution<int> card_dist(min_card, max_card);
  std::exponential_distribution<double> expo(1.0);
  std::map<std::string, int> cards;
  for (Id v = 0; v < g.size(); ++v) cards[g.name(v)] = card_dist(rng);
  std::map<std::string, std::vector<double>> cpts;
  for (Id v = 0; v < g.size(); ++v) {
    std::size_t rows = 1;
    for (Id p : g.parents(v)) rows *= static_cast<std::size_t>(cards[g.name(p)]);
    const int k = cards[g.name(v)];
    std::vector<double> t(rows * static_cast<std::size_t>(k), 0.0);
    const bool point_mass = deterministic && !g.parents(v).empty();
    std::uniform_int_distribution<int> pick(0, k - 1);
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = t.data() + r * static_cast<std::size_t>(k);
      if (point_mass) {
        row[pick(rng)] = 1.0;
        continue;
      }
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += (row[j] = expo(rng));
      for (int j = 0; j < k; ++j) row[j] /= s;
    }
    cpts[g.name(v)] = std::move(t);
  }
  return DiscreteSCM(g, std::move(cards), std::move(cpts));
}

std::size_t Table::index(const std::vector<int>& values) const {
  std::size_t i = 0;
  for (std::size_t k = 0; k < cards.size(); ++k) i = i * static_cast<std::size_t>(cards[k]) + static_cast<std::size_t>(values[k]);
  return i;
}

namespace {

struct Enumerator {
  const DiscreteSCM& scm;
  std::vector<Id> order;           // relevant nodes, topological
  std::vector<int> clamp;          // per node id, -1 if free
  std::vector<std::size_t> stride; // per node id, 0 if not kept
  std::vector<int> assignment;
  std::vector<double>* out = nullptr;

  void run(std::size_t k, double prob, std::size_t offset) {
    if (k == order.size()) {
      (*out)[offset] += prob;
      return;
    }
    const Id v = order[k];
    if (clamp[v] >= 0) {
      assignment[v] = clamp[v];
      run(k + 1, prob, offset + static_cast<std::size_t>(clamp[v]) * stride[v]);
      return;
    }
    const int card = scm.cardinality(v);
    const double* row = scm.cpt(v).data() + scm.row(v, assignment) * static_cast<std::size_t>(card);
    for (int val = 0; val < card; ++val) {
      if (row[val] == 0.0) continue;
      assignment[v] = val;
      run(k + 1, prob * row[val], offset + static_cast<std::size_t>(val) * stride[v]);
    }
  }
};

}  // namespace

Table joint_table(const DiscreteSCM& scm, const std::vector<std::string>& vars,
                  const std::map<std::string, int>& interventions) {
  const CausalGraph& g = scm.graph();
  Table t;
  t.vars = vars;
  std::vector<Id> keep;
  for (const auto& n : vars) {
    keep.push_back(g.id(n));
    t.cards.push_back(scm.cardinality(n));
  }
  if (std::set<Id>(keep.begin(), keep.end()).size() != keep.size()) throw ScmError("joint_table: repeated variable");

  Enumerator e{scm, {}, std::vector<int>(g.size(), -1), std::vector<std::size_t>(g.size(), 0),
               std::vector<int>(g.size(), 0), nullptr};
  NodeSet cut;
  for (const auto& [n, val] : interventions) {
    const Id v = g.id(n);
    if (val < 0 || val >= scm.cardinality(v)) throw ScmError("intervention value out of range for " + n);
    e.clamp[v] = val;
    cut.insert(n);
  }
  // Nodes that are not ancestors of a kept variable in the mutilated graph sum out to 1.
  const CausalGraph mutilated = graph_surgery(g, cut, {});
  const std::vector<bool> relevant = mutilated.ancestors_of(keep);
  double states = 1.0;
  for (Id v : g.topological_order()) {
    if (!relevant[v]) continue;
    e.order.push_back(v);
    if (e.clamp[v] < 0) states *= scm.cardinality(v);
  }
  if (states > kMaxStates) {
    throw StateSpaceError("state space of " + std::to_string(static_cast<long long>(states)) +
                          " configurations exceeds the enumeration limit");
  }
  std::size_t s = 1;
  for (std::size_t k = keep.size(); k-- > 0;) {
    e.stride[keep[k]] = s;
    s *= static_cast<std::size_t>(t.cards[k]);
  }
  t.p.assign(s, 0.0);
  e.out = &t.p;
  e.run(0, 1.0, 0);
  return t;
}

std::vector<double> exact_query(const DiscreteSCM& scm, const QuerySpec& q) {
  const CausalGraph& g = scm.graph();
  for (const auto& [n, v] : q.observations) {
    if (q.interventions.count(n)) throw ScmError("node " + n + " is both intervened on and observed");
    if (v < 0 || v >= scm.cardinality(n)) throw ScmError("observation value out of range for " + n);
  }
  if (q.observations.count(q.target)) throw ScmError("target " + q.target + " is observed");
  const int k = scm.cardinality(g.id(q.target));
  if (auto it = q.interventions.find(q.target); it != q.interventions.end()) {
    std::vector<double> out(static_cast<std::size_t>(k), 0.0);
    out[static_cast<std::size_t>(it->second)] = 1.0;
    return out;
  }
  std::vector<std::string> vars;
  for (const auto& [n, v] : q.observations) vars.push_back(n);
  vars.push_back(q.target);
  const Table t = joint_table(scm, vars, q.interventions);
  std::vector<int> idx;
  for (const auto& [n, v] : q.observations) idx.push_back(v);
  idx.push_back(0);
  std::vector<double> out(static_cast<std::size_t>(k));
  double z = 0.0;
  for (int y = 0; y < k; ++y) {
    idx.back() = y;
    z += (out[static_cast<std::size_t>(y)] = t.at(idx));
  }
  if (z <= 0.0) throw ZeroProbabilityError("conditioning event has probability 0");
  for (auto& v : out) v /= z;
  return out;
}

namespace {

const std::vector<std::string> kIdentificationVars = {"W", "R", "X", "Y", "D_X", "D_Y"};

void require_training_graph(const DiscreteSCM& scm) {
  if (!(scm.graph() == build_training_graph())) {
    throw ScmError("factorized query needs the training graph; the model's graph differs");
  }
}

// Factorized form for one (x, dx, dy) given the observational table over kIdentificationVars.
std::vector<double> factorized_from_table(const Table& t, int x, int dx, int dy) {
  const int cw = t.cards[0], cr = t.cards[1], cx = t.cards[2], cy = t.cards[3];
  auto p = [&](int w, int r, int xx, int y) { return t.at({w, r, xx, y, dx, dy}); };
  // Marginals over the observational table.
  std::vector<double> p_w(static_cast<std::size_t>(cw), 0.0), p_x(static_cast<std::size_t>(cx), 0.0);
  std::vector<double> p_wx(static_cast<std::size_t>(cw * cx), 0.0);
  std::vector<double> p_wrx(static_cast<std::size_t>(cw * cr * cx), 0.0);
  double p_d = 0.0;
  for (int w = 0; w < cw; ++w)
    for (int r = 0; r < cr; ++r)
      for (int xx = 0; xx < cx; ++xx)
        for (int y = 0; y < cy; ++y) {
          const double v = p(w, r, xx, y);
          p_d += v;
          p_w[static_cast<std::size_t>(w)] += v;
          p_x[static_cast<std::size_t>(xx)] += v;
          p_wx[static_cast<std::size_t>(w * cx + xx)] += v;
          p_wrx[static_cast<std::size_t>((w * cr + r) * cx + xx)] += v;
        }
  if (p_d <= 0.0) throw ZeroProbabilityError("P(D_X, D_Y) = 0");
  std::vector<double> out(static_cast<std::size_t>(cy), 0.0);
  for (int w = 0; w < cw; ++w) {
    const double pw = p_w[static_cast<std::size_t>(w)] / p_d;
    if (pw == 0.0) continue;
    const double pxw = p_wx[static_cast<std::size_t>(w * cx + x)];
    if (pxw <= 0.0) throw ZeroProbabilityError("P(x, w, D_X, D_Y) = 0 for a reachable w");
    for (int r = 0; r < cr; ++r) {
      const double pr = p_wrx[static_cast<std::size_t>((w * cr + r) * cx + x)] / pxw;
      if (pr == 0.0) continue;
      for (int xp = 0; xp < cx; ++xp) {
        const double px = p_x[static_cast<std::size_t>(xp)] / p_d;
        if (px == 0.0) continue;
        const double denom = p_wrx[static_cast<std::size_t>((w * cr + r) * cx + xp)];
        if (denom <= 0.0) throw ZeroProbabilityError("P(x', r, w, D_X, D_Y) = 0 for a reachable term");
        for (int y = 0; y < cy; ++y) {
          out[static_cast<std::size_t>(y)] += pw * pr * px * p(w, r, xp, y) / denom;
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<double> eq1_factorized_query(const DiscreteSCM& scm, int x, int dx, int dy) {
  require_training_graph(scm);
  if (x < 0 || x >= scm.cardinality("X") || dx < 0 || dx >= scm.cardinality("D_X") || dy < 0 ||
      dy >= scm.cardinality("D_Y")) {
    throw ScmError("eq1_factorized_query: value out of range");
  }
  return factorized_from_table(joint_table(scm, kIdentificationVars), x, dx, dy);
}

QueryGrid factorized_grid(const DiscreteSCM& scm) {
  require_training_graph(scm);
  const Table t = joint_table(scm, kIdentificationVars);
  const int cx = scm.cardinality("X"), cdx = scm.cardinality("D_X"), cdy = scm.cardinality("D_Y");
  QueryGrid grid(static_cast<std::size_t>(cx));
  for (int x = 0; x < cx; ++x) {
    grid[static_cast<std::size_t>(x)].resize(static_cast<std::size_t>(cdx));
    for (int dx = 0; dx < cdx; ++dx)
      for (int dy = 0; dy < cdy; ++dy)
        grid[static_cast<std::size_t>(x)][static_cast<std::size_t>(dx)].push_back(factorized_from_table(t, x, dx, dy));
  }
  return grid;
}

QueryGrid interventional_grid(const DiscreteSCM& scm) {
  const int cx = scm.cardinality("X"), cdx = scm.cardinality("D_X"), cdy = scm.cardinality("D_Y");
  const int cy = scm.cardinality("Y");
  QueryGrid grid(static_cast<std::size_t>(cx));
  for (int x = 0; x < cx; ++x) {
    const Table t = joint_table(scm, {"D_X", "D_Y", "Y"}, {{"X", x}});
    grid[static_cast<std::size_t>(x)].resize(static_cast<std::size_t>(cdx));
    for (int dx = 0; dx < cdx; ++dx)
      for (int dy = 0; dy < cdy; ++dy) {
        std::vector<double> row(static_cast<std::size_t>(cy));
        double z = 0.0;
        for (int y = 0; y < cy; ++y) z += (row[static_cast<std::size_t>(y)] = t.at({dx, dy, y}));
        if (z <= 0.0) throw ZeroProbabilityError("P(D_X, D_Y | do(x)) = 0");
        for (auto& v : row) v /= z;
        grid[static_cast<std::size_t>(x)][static_cast<std::size_t>(dx)].push_back(std::move(row));
      }
  }
  return grid;
}

IdentificationAgreement check_identification_random(int instances, std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  const CausalGraph g = build_training_graph();
  IdentificationAgreement a;
  for (int i = 0; i < instances; ++i) {
    const DiscreteSCM scm = random_scm(g, rng);
    const QueryGrid lhs = interventional_grid(scm);
    const QueryGrid rhs = factorized_grid(scm);
    double worst = 0.0;
    for (std::size_t x = 0; x < lhs.size(); ++x)
      for (std::size_t dx = 0; dx < lhs[x].size(); ++dx)
        for (std::size_t dy = 0; dy < lhs[x][dx].size(); ++dy)
          for (std::size_t y = 0; y < lhs[x][dx][dy].size(); ++y)
            worst = std::max(worst, std::abs(lhs[x][dx][dy][y] - rhs[x][dx][dy][y]));
    ++a.instances;
    if (worst <= tol) ++a.agreements;
    a.max_abs_diff = std::max(a.max_abs_diff, worst);
  }
  return a;
}

}  // namespace cib::causal

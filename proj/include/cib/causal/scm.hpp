// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Discrete structural causal models over a CausalGraph with exact inference by
// exhaustive enumeration.

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cib/causal/graph.hpp"

namespace cib::causal {

class ScmError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ZeroProbabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StateSpaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMaxStates = 1e7;

/// CPT layout for node v with parents p_1..p_k (in graph.parents(v) order):
/// row = mixed-radix index of the parent values with p_k fastest; each row
/// holds cardinality(v) probabilities.
class DiscreteSCM {
 public:
  DiscreteSCM(CausalGraph graph, std::map<std::string, int> cardinalities,
              std::map<std::string, std::vector<double>> cpts);

  const CausalGraph& graph() const { return graph_; }
  int cardinality(const std::string& node) const { return card_.at(graph_.id(node)); }
  int cardinality(CausalGraph::Id v) const { return card_.at(v); }
  const std::vector<double>& cpt(CausalGraph::Id v) const { return cpt_.at(v); }
  const std::vector<double>& cpt(const std::string& node) const { return cpt_.at(graph_.id(node)); }
  /// Row of v's CPT selected by the parent values in `assignment` (indexed by node id).
  std::size_t row(CausalGraph::Id v, const std::vector<int>& assignment) const;

 private:
  CausalGraph graph_;
  std::vector<int> card_;
  std::vector<std::vector<double>> cpt_;
};

/// Random instantiation. Rows are uniform on the simplex; with `deterministic`
/// every non-root row is a point mass.
DiscreteSCM random_scm(const CausalGraph& g, std::mt19937_64& rng, int min_card = 2, int max_card = 3,
                       bool deterministic = false);

/// Joint (or interventional) distribution table over `vars`.
struct Table {
  std::vector<std::string> vars;
  std::vector<int> cards;
  std::vector<double> p;  // row-major, last variable fastest

  std::size_t index(const std::vector<int>& values) const;
  double at(const std::vector<int>& values) const { return p[index(values)]; }
};

/// P(vars) in the model where every node in `interventions` is clamped and
/// cut from its parents. Throws StateSpaceError past kMaxStates.
Table joint_table(const DiscreteSCM& scm, const std::vector<std::string>& vars,
                  const std::map<std::string, int>& interventions = {});

struct QuerySpec {
  std::string target;
  std::map<std::string, int> interventions;
  std::map<std::string, int> observations;
};

/// P(target | do(interventions), observations). Throws ZeroProbabilityError
/// when the observations have probability 0.
std::vector<double> exact_query(const DiscreteSCM& scm, const QuerySpec& q);

/// Right-hand side of the identification formula
///   sum_w P(w|dx,dy) sum_r P(r|x,w,dx,dy) sum_x' P(x'|dx,dy) P(y|x',r,w,dx,dy)
/// with every factor read from the observational joint. The SCM's graph must
/// be the training graph.
std::vector<double> eq1_factorized_query(const DiscreteSCM& scm, int x, int dx, int dy);

/// Evaluates the factorized form for every (x, dx, dy) from one observational
/// table. Result indexed [x][dx][dy][y].
using QueryGrid = std::vector<std::vector<std::vector<std::vector<double>>>>;
QueryGrid factorized_grid(const DiscreteSCM& scm);
/// P(y | do(x), dx, dy) for every (x, dx, dy) by enumeration.
QueryGrid interventional_grid(const DiscreteSCM& scm);

struct IdentificationAgreement {
  int instances = 0;
  int agreements = 0;
  double max_abs_diff = 0.0;
};

/// Compares the two grids on `instances` random training-graph SCMs.
IdentificationAgreement check_identification_random(int instances, std::uint64_t seed, double tol);

}  // namespace cib::causal

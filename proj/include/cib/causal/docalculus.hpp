// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// The three do-calculus rules as graphical tests, S-admissibility, the
// training-time causal graph, and the machine-checked identification of
// P(y | do(x), D_X, D_Y).

#pragma once

#include <string>
#include <vector>

#include "cib/causal/graph.hpp"

namespace cib::causal {

/// Observation deletion: (Y _||_ Z | X, W) in G with incoming edges of X cut.
bool rule1_applicable(const CausalGraph& g, const NodeSet& y, const NodeSet& x_do, const NodeSet& z,
                      const NodeSet& w);
/// Action/observation exchange: (Y _||_ Z | X, W) in G with incoming edges of
/// X and outgoing edges of Z cut.
bool rule2_applicable(const CausalGraph& g, const NodeSet& y, const NodeSet& x_do, const NodeSet& z,
                      const NodeSet& w);
/// Action deletion: (Y _||_ Z | X, W) in G with incoming edges of X and of
/// Z(W) cut, where Z(W) are the Z nodes that are not ancestors of any W node
/// once X's incoming edges are removed.
bool rule3_applicable(const CausalGraph& g, const NodeSet& y, const NodeSet& x_do, const NodeSet& z,
                      const NodeSet& w);
/// The Z(W) set used by rule 3.
NodeSet rule3_cut_set(const CausalGraph& g, const NodeSet& x_do, const NodeSet& z, const NodeSet& w);

/// d_separated({a}, s, z). Every node of `s` must be a selection node.
bool s_admissible(const CausalGraph& g, const std::string& a, const NodeSet& z, const NodeSet& s);

/// Variables, latent confounders and the selection node of the learning
/// process. Z groups the domain-specific Z_S and the invariant Z_R.
CausalGraph build_training_graph();

/// D_X -> A -> Y with a latent U_XY confounding D_X and Y.
CausalGraph build_domain_graph();

struct RuleStep {
  int rule = 0;
  NodeSet y, x_do, z, w;
  std::string label;  // e.g. "rule 3: W _||_ X | D_X, D_Y"
  Edge mutation;      // one edge whose addition breaks the independence

  /// Cut sets of the tested graph in G_over{..}_under{..} notation.
  std::string surgery(const CausalGraph& g) const;
  bool evaluate(const CausalGraph& g) const;
};

/// The ordered rule applications that reduce P(y|do(x),D_X,D_Y) to
/// observational factors.
std::vector<RuleStep> identification_rule_steps();

struct StepResult {
  int index = 0;  // 1-based
  RuleStep step;
  std::string surgery;
  bool passed = false;
};

struct DerivationReport {
  std::vector<StepResult> steps;

  bool all_passed() const;
  int passed_count() const;
  const StepResult* first_failure() const;
  std::string to_text() const;
};

/// Evaluates every step on `g`. Throws GraphError when a required node is missing.
DerivationReport verify_eq1_derivation(const CausalGraph& g);
DerivationReport verify_eq1_derivation();

struct NamedCheck {
  std::string name;
  bool passed = false;
};

struct StructureReport {
  std::vector<NamedCheck> checks;

  bool all_passed() const;
  std::string to_text() const;
};

/// Every directed path from `from` to `to`, as node-name sequences.
std::vector<std::vector<std::string>> directed_paths(const CausalGraph& g, const std::string& from,
                                                     const std::string& to);

/// Frontdoor conditions for mediator set m between x and y.
bool frontdoor_satisfied(const CausalGraph& g, const std::string& x, const NodeSet& m, const std::string& y);

/// Checks on the simplified domain graph and on the three D_X-Y paths of the
/// training graph that make P(y|do(x),do(D_X),D_Y) require marginalising D_X.
StructureReport verify_intractability_structure();

}  // namespace cib::causal

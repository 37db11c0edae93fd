// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/causal/docalculus.hpp"

#include <algorithm>
#include <sstream>

namespace cib::causal {

namespace {

NodeSet unite(const NodeSet& a, const NodeSet& b) {
  NodeSet out = a;
  out.insert(b.begin(), b.end());
  return out;
}

std::string join(const NodeSet& s) {
  std::string out;
  for (const auto& n : s) out += (out.empty() ? "" : ",") + n;
  return out;
}

void require_nodes(const CausalGraph& g, std::initializer_list<NodeSet> sets) {
  for (const auto& s : sets)
    for (const auto& n : s)
      if (!g.has(n)) throw GraphError("graph is missing required node " + n);
}

bool path_edges_present(const CausalGraph& g, const std::vector<Edge>& edges) {
  return std::all_of(edges.begin(), edges.end(), [&](const Edge& e) {
    return g.has(e.first) && g.has(e.second) && g.has_edge(e.first, e.second);
  });
}

}  // namespace

bool rule1_applicable(const CausalGraph& g, const NodeSet& y, const NodeSet& x_do, const NodeSet& z,
                      const NodeSet& w) {
  require_nodes(g, {y, x_do, z, w});
  if (z.empty()) return true;
  return d_separated(graph_surgery(g, x_do, {}), y, z, unite(x_do, w));
}

bool rule2_applicable(const CausalGraph& g, const NodeSet& y, const NodeSet& x_do, const NodeSet& z,
                      const NodeSet& w) {
  require_nodes(g, {y, x_do, z, w});
  if (z.empty()) return true;
  return d_separated(graph_surgery(g, x_do, z), y, z, unite(x_do, w));
}

bool rule3_applicable(const CausalGraph& g, const NodeSet& y, const NodeSet& x_do, const NodeSet& z,
                      const NodeSet& w) {
  require_nodes(g, {y, x_do, z, w});
  if (z.empty()) return true;
  return d_separated(graph_surgery(g, unite(x_do, rule3_cut_set(g, x_do, z, w)), {}), y, z, unite(x_do, w));
}

NodeSet rule3_cut_set(const CausalGraph& g, const NodeSet& x_do, const NodeSet& z, const NodeSet& w) {
  const CausalGraph gx = graph_surgery(g, x_do, {});
  const auto anc_w = gx.ancestors_of(gx.ids(w));
  NodeSet z_w;
  for (const auto& n : z)
    if (!anc_w[gx.id(n)]) z_w.insert(n);
  return z_w;
}

bool s_admissible(const CausalGraph& g, const std::string& a, const NodeSet& z, const NodeSet& s) {
  for (const auto& n : s) {
    if (g.role(n) != NodeRole::selection) throw GraphError("s_admissible: " + n + " is not a selection node");
  }
  return d_separated(g, {a}, s, z);
}

CausalGraph build_training_graph() {
  CausalGraph g;
  for (const char* n : {"X", "Y", "R", "W", "D_X", "D_Y", "D_R"}) g.add_node(n, NodeRole::observed);
  for (const char* n : {"Z", "Z_S", "Z_R", "U_XY", "U_R", "U_W"}) g.add_node(n, NodeRole::latent);
  g.add_node("S", NodeRole::selection);
  const std::vector<Edge> edges = {
      {"Z", "X"},      {"Z", "D_X"},    {"X", "R"},      {"R", "Y"},     {"U_XY", "X"},
      {"U_XY", "Y"},   {"U_XY", "D_X"}, {"U_XY", "D_Y"}, {"S", "Z_S"},   {"Z_S", "Z"},
      {"Z_R", "Z"},    {"D_X", "D_R"},  {"D_R", "W"},    {"D_Y", "W"},   {"W", "Y"},
      {"U_W", "W"},    {"U_R", "D_R"},  {"U_R", "R"},
  };
  for (const auto& [p, c] : edges) g.add_edge(p, c);
  return g;
}

CausalGraph build_domain_graph() {
  CausalGraph g;
  g.add_node("D_X");
  g.add_node("A");
  g.add_node("Y");
  g.add_node("U_XY", NodeRole::latent);
  g.add_edge("D_X", "A");
  g.add_edge("A", "Y");
  g.add_edge("U_XY", "D_X");
  g.add_edge("U_XY", "Y");
  return g;
}

std::string RuleStep::surgery(const CausalGraph& g) const {
  NodeSet over = x_do, under;
  if (rule == 2) under = z;
  if (rule == 3) over = unite(over, rule3_cut_set(g, x_do, z, w));
  std::string s = "G";
  if (!over.empty()) s += "_over{" + join(over) + "}";
  if (!under.empty()) s += "_under{" + join(under) + "}";
  return s;
}

bool RuleStep::evaluate(const CausalGraph& g) const {
  switch (rule) {
    case 1: return rule1_applicable(g, y, x_do, z, w);
    case 2: return rule2_applicable(g, y, x_do, z, w);
    case 3: return rule3_applicable(g, y, x_do, z, w);
  }
  throw GraphError("unknown rule " + std::to_string(rule));
}

std::vector<RuleStep> identification_rule_steps() {
  const NodeSet d{"D_X", "D_Y"};
  const NodeSet dw{"D_X", "D_Y", "W"};
  return {
      {3, {"W"}, {}, {"X"}, d, "rule 3: W _||_ X | D_X,D_Y", {"X", "W"}},
      {2, {"R"}, {}, {"X"}, dw, "rule 2: R _||_ X | D_X,D_Y,W", {"U_XY", "R"}},
      {2, {"Y"}, {"X"}, {"R"}, dw, "rule 2: Y _||_ R | X,D_X,D_Y,W", {"U_R", "Y"}},
      {3, {"Y"}, {"R"}, {"X"}, dw, "rule 3: Y _||_ X | R,D_X,D_Y,W", {"X", "W"}},
      {2, {"Y"}, {}, {"R"}, {"X", "D_X", "D_Y", "W"}, "rule 2: Y _||_ R | X,D_X,D_Y,W", {"U_R", "Y"}},
      {3, {"X"}, {}, {"R"}, dw, "rule 3: X _||_ R | D_X,D_Y,W", {"R", "W"}},
      {1, {"X"}, {}, {"W"}, d, "rule 1: X _||_ W | D_X,D_Y", {"W", "X"}},
  };
}

bool DerivationReport::all_passed() const {
  return std::all_of(steps.begin(), steps.end(), [](const StepResult& s) { return s.passed; });
}

int DerivationReport::passed_count() const {
  return static_cast<int>(std::count_if(steps.begin(), steps.end(), [](const StepResult& s) { return s.passed; }));
}

const StepResult* DerivationReport::first_failure() const {
  for (const auto& s : steps)
    if (!s.passed) return &s;
  return nullptr;
}

std::string DerivationReport::to_text() const {
  std::ostringstream os;
  for (const auto& s : steps) {
    os << "step " << s.index << ": " << s.step.label << " in " << s.surgery << " ... "
       << (s.passed ? "PASS" : "FAIL") << '\n';
  }
  os << "derivation.steps_passed=" << passed_count() << '/' << steps.size() << '\n';
  for (const auto& s : steps) {
    os << "derivation.step." << s.index << ".rule=" << s.step.rule << '\n';
    os << "derivation.step." << s.index << ".pass=" << (s.passed ? "true" : "false") << '\n';
  }
  return os.str();
}

DerivationReport verify_eq1_derivation(const CausalGraph& g) {
  require_nodes(g, {{"X", "Y", "R", "W", "D_X", "D_Y"}});
  DerivationReport report;
  int index = 0;
  for (const auto& step : identification_rule_steps()) {
    report.steps.push_back({++index, step, step.surgery(g), step.evaluate(g)});
  }
  return report;
}

DerivationReport verify_eq1_derivation() { return verify_eq1_derivation(build_training_graph()); }

bool StructureReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const NamedCheck& c) { return c.passed; });
}

std::string StructureReport::to_text() const {
  std::ostringstream os;
  for (const auto& c : checks) os << "structure." << c.name << '=' << (c.passed ? "pass" : "fail") << '\n';
  return os.str();
}

std::vector<std::vector<std::string>> directed_paths(const CausalGraph& g, const std::string& from,
                                                     const std::string& to) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> path{from};
  const auto target = g.id(to);
  auto dfs = [&](auto&& self, CausalGraph::Id v) -> void {
    if (v == target) {
      out.push_back(path);
      return;
    }
    for (auto c : g.children(v)) {
      path.push_back(g.name(c));
      self(self, c);
      path.pop_back();
    }
  };
  dfs(dfs, g.id(from));
  return out;
}

bool frontdoor_satisfied(const CausalGraph& g, const std::string& x, const NodeSet& m, const std::string& y) {
  for (const auto& p : directed_paths(g, x, y)) {
    const bool hit = std::any_of(p.begin() + 1, p.end() - 1, [&](const std::string& n) { return m.count(n) > 0; });
    if (!hit) return false;
  }
  if (!d_separated(graph_surgery(g, {}, {x}), {x}, m, {})) return false;
  return d_separated(graph_surgery(g, {}, m), m, {y}, {x});
}

StructureReport verify_intractability_structure() {
  StructureReport r;
  auto add = [&](std::string name, bool ok) { r.checks.push_back({std::move(name), ok}); };

  const CausalGraph f = build_domain_graph();
  add("domain.backdoor_open", !d_separated(f, {"D_X"}, {"Y"}, {}));
  add("domain.frontdoor_intercepts", frontdoor_satisfied(f, "D_X", {"A"}, "Y"));
  add("domain.frontdoor_no_backdoor_dx_to_a", d_separated(graph_surgery(f, {}, {"D_X"}), {"D_X"}, {"A"}, {}));
  add("domain.frontdoor_a_to_y_blocked_by_dx", d_separated(graph_surgery(f, {}, {"A"}), {"A"}, {"Y"}, {"D_X"}));
  CausalGraph cut = f;
  cut.remove_edge("U_XY", "D_X");
  add("domain.unconfounded_separated_given_a", d_separated(cut, {"D_X"}, {"Y"}, {"A"}));

  const CausalGraph g = build_training_graph();
  const std::vector<Edge> direct = {{"D_X", "D_R"}, {"D_R", "W"}, {"W", "Y"}};
  const std::vector<Edge> via_z = {{"Z", "D_X"}, {"Z", "X"}, {"X", "R"}, {"R", "Y"}};
  const std::vector<Edge> via_u = {{"U_XY", "D_X"}, {"U_XY", "Y"}};
  add("training.direct_path_exists", path_edges_present(g, direct));
  add("training.z_backdoor_exists", path_edges_present(g, via_z));
  add("training.u_backdoor_exists", path_edges_present(g, via_u));
  const CausalGraph gx = graph_surgery(g, {"X"}, {});
  add("training.do_x_cuts_z_backdoor", !path_edges_present(gx, via_z));
  add("training.do_x_keeps_direct_and_u_paths", path_edges_present(gx, direct) && path_edges_present(gx, via_u));
  add("training.u_backdoor_latent_only", g.role("U_XY") == NodeRole::latent);
  // No observed conditioning set blocks the confounded backdoor.
  const CausalGraph back = graph_surgery(g, {"X"}, {"D_X"});
  const std::vector<std::string> pool = {"X", "R", "W", "D_Y", "D_R"};
  bool always_open = true;
  for (unsigned mask = 0; mask < (1u << pool.size()); ++mask) {
    NodeSet cond;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (mask & (1u << i)) cond.insert(pool[i]);
    if (d_separated(back, {"D_X"}, {"Y"}, cond)) always_open = false;
  }
  add("training.backdoor_unblockable_by_observed", always_open);
  return r;
}

}  // namespace cib::causal

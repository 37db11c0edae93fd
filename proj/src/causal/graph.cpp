// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cib/causal/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace cib::causal {

const char* role_name(NodeRole r) {
  switch (r) {
    case NodeRole::observed: return "observed";
    case NodeRole::latent: return "latent";
    case NodeRole::selection: return "selection";
  }
  return "?";
}

NodeRole parse_role(const std::string& s) {
  if (s == "observed") return NodeRole::observed;
  if (s == "latent") return NodeRole::latent;
  if (s == "selection") return NodeRole::selection;
  throw GraphError("unknown node role '" + s + "'");
}

CausalGraph::Id CausalGraph::add_node(const std::string& name, NodeRole role) {
  if (name.empty()) throw GraphError("empty node name");
  if (has(name)) throw GraphError("duplicate node " + name);
  names_.push_back(name);
  roles_.push_back(role);
  parents_.emplace_back();
  children_.emplace_back();
  return names_.size() - 1;
}

bool CausalGraph::has(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

CausalGraph::Id CausalGraph::id(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw GraphError("unknown node " + name);
  return static_cast<Id>(it - names_.begin());
}

std::vector<CausalGraph::Id> CausalGraph::ids(const NodeSet& names) const {
  std::vector<Id> out;
  for (const auto& n : names) out.push_back(id(n));
  return out;
}

bool CausalGraph::has_edge(const std::string& parent, const std::string& child) const {
  const auto& ps = parents_.at(id(child));
  return std::find(ps.begin(), ps.end(), id(parent)) != ps.end();
}

bool CausalGraph::is_ancestor(Id a, Id b) const {
  std::vector<bool> seen(size(), false);
  std::vector<Id> stack{a};
  while (!stack.empty()) {
    Id v = stack.back();
    stack.pop_back();
    if (v == b) return true;
    if (seen[v]) continue;
    seen[v] = true;
    for (Id c : children_[v]) stack.push_back(c);
  }
  return false;
}

void CausalGraph::add_edge(const std::string& parent, const std::string& child) {
  const Id p = id(parent), c = id(child);
  if (p == c) throw GraphError("self loop on " + parent);
  if (roles_[c] == NodeRole::selection) throw GraphError("selection node " + child + " cannot have parents");
  if (has_edge(parent, child)) return;
  if (is_ancestor(c, p)) throw GraphError("edge " + parent + " -> " + child + " would create a cycle");
  parents_[c].push_back(p);
  children_[p].push_back(c);
}

void CausalGraph::remove_edge(const std::string& parent, const std::string& child) {
  const Id p = id(parent), c = id(child);
  auto& ps = parents_[c];
  auto& cs = children_[p];
  ps.erase(std::remove(ps.begin(), ps.end(), p), ps.end());
  cs.erase(std::remove(cs.begin(), cs.end(), c), cs.end());
}

std::vector<Edge> CausalGraph::edges() const {
  std::vector<Edge> out;
  for (Id c = 0; c < size(); ++c)
    for (Id p : parents_[c]) out.emplace_back(names_[p], names_[c]);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t CausalGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& ps : parents_) n += ps.size();
  return n;
}

std::vector<CausalGraph::Id> CausalGraph::topological_order() const {
  std::vector<std::size_t> indeg(size());
  for (Id v = 0; v < size(); ++v) indeg[v] = parents_[v].size();
  std::deque<Id> ready;
  for (Id v = 0; v < size(); ++v)
    if (indeg[v] == 0) ready.push_back(v);
  std::vector<Id> order;
  while (!ready.empty()) {
    Id v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (Id c : children_[v])
      if (--indeg[c] == 0) ready.push_back(c);
  }
  if (order.size() != size()) throw GraphError("graph contains a cycle");
  return order;
}

std::vector<bool> CausalGraph::ancestors_of(const std::vector<Id>& nodes) const {
  std::vector<bool> anc(size(), false);
  std::vector<Id> stack(nodes.begin(), nodes.end());
  while (!stack.empty()) {
    Id v = stack.back();
    stack.pop_back();
    if (anc[v]) continue;
    anc[v] = true;
    for (Id p : parents_[v]) stack.push_back(p);
  }
  return anc;
}

bool CausalGraph::operator==(const CausalGraph& other) const {
  if (size() != other.size()) return false;
  for (Id v = 0; v < size(); ++v) {
    if (!other.has(names_[v]) || other.role(names_[v]) != roles_[v]) return false;
  }
  return edges() == other.edges();
}

CausalGraph graph_surgery(const CausalGraph& g, const NodeSet& remove_incoming,
                          const NodeSet& remove_outgoing) {
  for (const auto& n : remove_incoming) g.id(n);
  for (const auto& n : remove_outgoing) g.id(n);
  CausalGraph out;
  for (CausalGraph::Id v = 0; v < g.size(); ++v) out.add_node(g.name(v), g.role(v));
  for (const auto& [p, c] : g.edges()) {
    if (remove_incoming.count(c) || remove_outgoing.count(p)) continue;
    out.add_edge(p, c);
  }
  return out;
}

bool d_separated(const CausalGraph& g, const NodeSet& a, const NodeSet& b, const NodeSet& z) {
  auto overlap = [](const NodeSet& x, const NodeSet& y) {
    return std::any_of(x.begin(), x.end(), [&](const std::string& n) { return y.count(n) > 0; });
  };
  if (overlap(a, b) || overlap(a, z) || overlap(b, z)) {
    throw GraphError("d_separated: node sets must be disjoint");
  }
  const auto ai = g.ids(a), bi = g.ids(b), zi = g.ids(z);
  std::vector<bool> in_z(g.size(), false), in_b(g.size(), false);
  for (auto v : zi) in_z[v] = true;
  for (auto v : bi) in_b[v] = true;
  const std::vector<bool> anc_z = g.ancestors_of(zi);

  // Reachability over (node, direction): up = entered from a child,
  // down = entered from a parent.
  enum Dir { up = 0, down = 1 };
  std::vector<bool> visited(2 * g.size(), false);
  std::vector<std::pair<CausalGraph::Id, Dir>> stack;
  for (auto v : ai) stack.emplace_back(v, up);
  while (!stack.empty()) {
    auto [v, d] = stack.back();
    stack.pop_back();
    if (visited[2 * v + d]) continue;
    visited[2 * v + d] = true;
    if (!in_z[v] && in_b[v]) return false;
    if (d == up && !in_z[v]) {
      for (auto p : g.parents(v)) stack.emplace_back(p, up);
      for (auto c : g.children(v)) stack.emplace_back(c, down);
    } else if (d == down) {
      if (!in_z[v])
        for (auto c : g.children(v)) stack.emplace_back(c, down);
      if (anc_z[v])
        for (auto p : g.parents(v)) stack.emplace_back(p, up);
    }
  }
  return true;
}

CausalGraph parse_edge_list(std::istream& is) {
  std::vector<std::string> order;
  std::vector<std::pair<std::string, NodeRole>> roles;
  std::vector<Edge> edges;
  auto note = [&](const std::string& n) {
    if (std::find(order.begin(), order.end(), n) == order.end()) order.push_back(n);
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string kw, node, kind;
      ss >> kw;
      if (kw != "role") continue;
      if (!(ss >> node >> kind)) throw GraphError("line " + std::to_string(lineno) + ": malformed #role line");
      note(node);
      roles.emplace_back(node, parse_role(kind));
      continue;
    }
    const auto arrow = line.find("->");
    if (arrow == std::string::npos) {
      throw GraphError("line " + std::to_string(lineno) + ": expected 'parent -> child'");
    }
    std::istringstream lhs(line.substr(0, arrow)), rhs(line.substr(arrow + 2));
    std::string p, c, extra;
    if (!(lhs >> p) || !(rhs >> c) || (lhs >> extra) || (rhs >> extra)) {
      throw GraphError("line " + std::to_string(lineno) + ": expected 'parent -> child'");
    }
    note(p);
    note(c);
    edges.emplace_back(p, c);
  }
  CausalGraph g;
  for (const auto& n : order) {
    NodeRole r = NodeRole::observed;
    for (const auto& [rn, rr] : roles)
      if (rn == n) r = rr;
    g.add_node(n, r);
  }
  for (const auto& [p, c] : edges) g.add_edge(p, c);
  return g;
}

void write_edge_list(std::ostream& os, const CausalGraph& g) {
  for (CausalGraph::Id v = 0; v < g.size(); ++v) {
    os << "#role " << g.name(v) << ' ' << role_name(g.role(v)) << '\n';
  }
  for (const auto& [p, c] : g.edges()) os << p << " -> " << c << '\n';
}

CausalGraph load_edge_list(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw GraphError("cannot open graph file " + path);
  return parse_edge_list(is);
}

}  // namespace cib::causal

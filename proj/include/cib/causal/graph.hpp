// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Directed acyclic graphs with observed, latent and selection nodes;
// d-separation, edge surgery, and the edge-list text format.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cib::causal {

enum class NodeRole { observed, latent, selection };

const char* role_name(NodeRole r);
NodeRole parse_role(const std::string& s);

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using NodeSet = std::set<std::string>;
using Edge = std::pair<std::string, std::string>;

class CausalGraph {
 public:
  using Id = std::size_t;

  /// Throws GraphError on a duplicate name.
  Id add_node(const std::string& name, NodeRole role = NodeRole::observed);
  /// Throws GraphError on unknown nodes, self loops, edges into a selection
  /// node, or edges that would close a cycle. Duplicate edges are ignored.
  void add_edge(const std::string& parent, const std::string& child);
  void remove_edge(const std::string& parent, const std::string& child);

  std::size_t size() const { return names_.size(); }
  bool has(const std::string& name) const;
  Id id(const std::string& name) const;
  const std::string& name(Id v) const { return names_.at(v); }
  NodeRole role(Id v) const { return roles_.at(v); }
  NodeRole role(const std::string& name) const { return roles_.at(id(name)); }
  const std::vector<Id>& parents(Id v) const { return parents_.at(v); }
  const std::vector<Id>& children(Id v) const { return children_.at(v); }
  bool has_edge(const std::string& parent, const std::string& child) const;

  std::vector<std::string> node_names() const { return names_; }
  /// Sorted (parent, child) pairs.
  std::vector<Edge> edges() const;
  std::size_t edge_count() const;
  std::vector<Id> topological_order() const;
  /// Ancestors of `nodes`, including the nodes themselves.
  std::vector<bool> ancestors_of(const std::vector<Id>& nodes) const;
  bool is_ancestor(Id a, Id b) const;  // a reaches b along directed edges (or a == b)

  std::vector<Id> ids(const NodeSet& names) const;

  /// Same node set with identical roles and edges.
  bool operator==(const CausalGraph& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<NodeRole> roles_;
  std::vector<std::vector<Id>> parents_;
  std::vector<std::vector<Id>> children_;
};

/// Deletes incoming edges of `remove_incoming` and outgoing edges of
/// `remove_outgoing`.
CausalGraph graph_surgery(const CausalGraph& g, const NodeSet& remove_incoming,
                          const NodeSet& remove_outgoing);

/// True iff every path between a and b is blocked given z. The three sets must
/// be pairwise disjoint.
bool d_separated(const CausalGraph& g, const NodeSet& a, const NodeSet& b, const NodeSet& z);

/// Edge-list format: `parent -> child` per line, `#role <node> <kind>` lines,
/// other `#` lines are comments. Nodes default to observed.
CausalGraph parse_edge_list(std::istream& is);
void write_edge_list(std::ostream& os, const CausalGraph& g);
CausalGraph load_edge_list(const std::string& path);

}  // namespace cib::causal

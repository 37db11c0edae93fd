// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "../support/dsep_oracle.hpp"
#include "cib/causal/docalculus.hpp"
#include "cib/causal/graph.hpp"
#include "cib/causal/scm.hpp"

using namespace cib::causal;

namespace {

CausalGraph chain3(const char* a, const char* b, const char* c) {
  CausalGraph g;
  g.add_node(a);
  g.add_node(b);
  g.add_node(c);
  g.add_edge(a, b);
  g.add_edge(b, c);
  return g;
}

CausalGraph collider() {
  CausalGraph g;
  g.add_node("A");
  g.add_node("B");
  g.add_node("C");
  g.add_edge("A", "B");
  g.add_edge("C", "B");
  return g;
}

}  // namespace

TEST(CausalGraph, RejectsCyclesSelectionParentsAndUnknownNodes) {
  CausalGraph g = chain3("A", "B", "C");
  EXPECT_THROW(g.add_edge("C", "A"), GraphError);
  EXPECT_THROW(g.add_edge("A", "A"), GraphError);
  EXPECT_THROW(g.add_edge("A", "Q"), GraphError);
  EXPECT_THROW(g.add_node("A"), GraphError);
  g.add_node("S", NodeRole::selection);
  EXPECT_THROW(g.add_edge("A", "S"), GraphError);
  EXPECT_NO_THROW(g.add_edge("S", "A"));
}

TEST(TrainingGraph, MatchesFixture) {
  const CausalGraph g = build_training_graph();
  EXPECT_EQ(g.size(), 14u);
  const std::vector<Edge> expected = {
      {"D_R", "W"},   {"D_X", "D_R"}, {"D_Y", "W"},    {"R", "Y"},     {"S", "Z_S"},  {"U_R", "D_R"},
      {"U_R", "R"},   {"U_W", "W"},   {"U_XY", "D_X"}, {"U_XY", "D_Y"}, {"U_XY", "X"}, {"U_XY", "Y"},
      {"W", "Y"},     {"X", "R"},     {"Z", "D_X"},    {"Z", "X"},     {"Z_R", "Z"},  {"Z_S", "Z"},
  };
  EXPECT_EQ(g.edges(), expected);
  EXPECT_TRUE(g.has_edge("D_X", "D_R"));
  EXPECT_NO_THROW(g.topological_order());
  for (const char* n : {"U_XY", "U_R", "U_W", "Z", "Z_S", "Z_R"}) EXPECT_EQ(g.role(n), NodeRole::latent) << n;
  EXPECT_EQ(g.role("S"), NodeRole::selection);
  for (const char* n : {"X", "Y", "R", "W", "D_X", "D_Y", "D_R"}) EXPECT_EQ(g.role(n), NodeRole::observed) << n;
}

TEST(GraphSurgery, RemovesIncomingOrOutgoing) {
  const CausalGraph g = chain3("A", "X", "B");
  const CausalGraph in = graph_surgery(g, {"X"}, {});
  EXPECT_EQ(in.edges(), (std::vector<Edge>{{"X", "B"}}));
  const CausalGraph out = graph_surgery(g, {}, {"X"});
  EXPECT_EQ(out.edges(), (std::vector<Edge>{{"A", "X"}}));
  EXPECT_TRUE(graph_surgery(in, {"X"}, {}) == in);
  EXPECT_THROW(graph_surgery(g, {"Q"}, {}), GraphError);
}

TEST(GraphSurgery, NeverIntroducesCycles) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const CausalGraph g = cib::testing::random_dag(rng, 7, 0.4);
    const auto t = cib::testing::random_triple(rng, g);
    const CausalGraph s = graph_surgery(g, t.a, t.z);
    EXPECT_NO_THROW(s.topological_order());
    EXPECT_LE(s.edge_count(), g.edge_count());
  }
}

TEST(DSeparation, ChainAndColliderExamples) {
  const CausalGraph c = chain3("A", "B", "C");
  EXPECT_TRUE(d_separated(c, {"A"}, {"C"}, {"B"}));
  EXPECT_FALSE(d_separated(c, {"A"}, {"C"}, {}));
  const CausalGraph v = collider();
  EXPECT_TRUE(d_separated(v, {"A"}, {"C"}, {}));
  EXPECT_FALSE(d_separated(v, {"A"}, {"C"}, {"B"}));
}

TEST(DSeparation, ColliderOpenedByDescendant) {
  CausalGraph g = collider();
  g.add_node("D");
  g.add_edge("B", "D");
  EXPECT_FALSE(d_separated(g, {"A"}, {"C"}, {"D"}));
}

TEST(DSeparation, RejectsOverlappingSets) {
  const CausalGraph c = chain3("A", "B", "C");
  EXPECT_THROW(d_separated(c, {"A"}, {"A"}, {}), GraphError);
  EXPECT_THROW(d_separated(c, {"A"}, {"C"}, {"C"}), GraphError);
}

TEST(DSeparation, TrainingGraphSelectionClaims) {
  const CausalGraph g = build_training_graph();
  EXPECT_TRUE(d_separated(g, {"W"}, {"S"}, {"D_X", "D_Y"}));
  EXPECT_FALSE(d_separated(g, {"X"}, {"S"}, {"D_X", "D_Y"}));
}

TEST(DSeparation, AgreesWithPathEnumerationOnRandomDags) {
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<std::size_t> size(2, 9);
  std::uniform_real_distribution<double> density(0.1, 0.6);
  int disagreements = 0;
  for (int i = 0; i < 500; ++i) {
    const CausalGraph g = cib::testing::random_dag(rng, size(rng), density(rng));
    const auto t = cib::testing::random_triple(rng, g);
    if (d_separated(g, t.a, t.b, t.z) != cib::testing::d_separated_by_paths(g, t.a, t.b, t.z)) ++disagreements;
  }
  EXPECT_EQ(disagreements, 0);
}

TEST(DoCalculus, TrainingGraphExamples) {
  const CausalGraph g = build_training_graph();
  EXPECT_TRUE(rule3_applicable(g, {"W"}, {}, {"X"}, {"D_X", "D_Y"}));
  EXPECT_TRUE(rule2_applicable(g, {"Y"}, {"X"}, {"R"}, {"D_X", "D_Y", "W"}));
}

TEST(DoCalculus, DisconnectedNodesSatisfyEveryRule) {
  CausalGraph g;
  g.add_node("A");
  g.add_node("B");
  g.add_node("C");
  EXPECT_TRUE(rule1_applicable(g, {"A"}, {"C"}, {"B"}, {}));
  EXPECT_TRUE(rule2_applicable(g, {"A"}, {"C"}, {"B"}, {}));
  EXPECT_TRUE(rule3_applicable(g, {"A"}, {"C"}, {"B"}, {}));
}

TEST(DoCalculus, RulesOnTextbookFrontdoorGraph) {
  // X -> M -> Y with latent U -> X, U -> Y.
  CausalGraph g;
  g.add_node("X");
  g.add_node("M");
  g.add_node("Y");
  g.add_node("U", NodeRole::latent);
  g.add_edge("X", "M");
  g.add_edge("M", "Y");
  g.add_edge("U", "X");
  g.add_edge("U", "Y");
  EXPECT_TRUE(rule2_applicable(g, {"M"}, {}, {"X"}, {}));      // P(m|do(x)) = P(m|x)
  EXPECT_FALSE(rule2_applicable(g, {"Y"}, {}, {"X"}, {}));     // confounded
  EXPECT_TRUE(rule2_applicable(g, {"Y"}, {}, {"M"}, {"X"}));   // P(y|do(m),x) = P(y|m,x)
  EXPECT_TRUE(rule3_applicable(g, {"X"}, {}, {"M"}, {}));      // P(x|do(m)) = P(x)
  EXPECT_FALSE(rule3_applicable(g, {"Y"}, {}, {"M"}, {}));
  EXPECT_TRUE(frontdoor_satisfied(g, "X", {"M"}, "Y"));
}

TEST(DoCalculus, RuleThreeUsesAncestorsOfW) {
  // Z -> W -> Y with Z -> Y: Z is an ancestor of W so its incoming edges stay.
  CausalGraph g;
  for (const char* n : {"P", "Z", "W", "Y"}) g.add_node(n);
  g.add_edge("P", "Z");
  g.add_edge("P", "Y");
  g.add_edge("Z", "W");
  EXPECT_EQ(rule3_cut_set(g, {}, {"Z"}, {"W"}), NodeSet{});
  EXPECT_EQ(rule3_cut_set(g, {}, {"Z"}, {}), NodeSet{"Z"});
  EXPECT_FALSE(rule3_applicable(g, {"Y"}, {}, {"Z"}, {"W"}));
  EXPECT_TRUE(rule3_applicable(g, {"Y"}, {}, {"Z"}, {}));
}

TEST(SAdmissibility, TrainingGraphClaims) {
  const CausalGraph g = build_training_graph();
  EXPECT_TRUE(s_admissible(g, "W", {"D_X", "D_Y"}, {"S"}));
  EXPECT_TRUE(s_admissible(g, "R", {"X", "W", "D_X", "D_Y"}, {"S"}));
  EXPECT_FALSE(s_admissible(g, "X", {"D_X", "D_Y"}, {"S"}));
  EXPECT_FALSE(s_admissible(g, "Y", {"X", "R", "W", "D_X", "D_Y"}, {"S"}));
  EXPECT_THROW(s_admissible(g, "W", {"D_X"}, {"Z"}), GraphError);
}

TEST(Derivation, AllStepsPassOnTrainingGraph) {
  const auto report = verify_eq1_derivation();
  ASSERT_EQ(report.steps.size(), 7u);
  EXPECT_EQ(report.passed_count(), 7);
  EXPECT_TRUE(report.all_passed());
  const std::vector<int> rules = {3, 2, 2, 3, 2, 3, 1};
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(report.steps[i].step.rule, rules[i]);
  EXPECT_EQ(report.to_text(), verify_eq1_derivation().to_text());
  EXPECT_NE(report.to_text().find("derivation.steps_passed=7/7"), std::string::npos);
}

TEST(Derivation, ReportsSurgeryNotation) {
  const auto report = verify_eq1_derivation();
  EXPECT_EQ(report.steps[0].surgery, "G_over{X}");
  EXPECT_EQ(report.steps[1].surgery, "G_under{X}");
  EXPECT_EQ(report.steps[2].surgery, "G_over{X}_under{R}");
  EXPECT_EQ(report.steps[3].surgery, "G_over{R,X}");
  EXPECT_EQ(report.steps[4].surgery, "G_under{R}");
  EXPECT_EQ(report.steps[5].surgery, "G_over{R}");
  EXPECT_EQ(report.steps[6].surgery, "G");
}

TEST(Derivation, EdgeFromWToXBreaksOnlyTheFinalStep) {
  CausalGraph g = build_training_graph();
  g.add_edge("W", "X");
  const auto report = verify_eq1_derivation(g);
  ASSERT_NE(report.first_failure(), nullptr);
  EXPECT_EQ(report.first_failure()->index, 7);
  EXPECT_EQ(report.passed_count(), 6);
}

TEST(Derivation, EdgeFromXToWBreaksTheFirstStep) {
  CausalGraph g = build_training_graph();
  g.add_edge("X", "W");
  const auto report = verify_eq1_derivation(g);
  ASSERT_NE(report.first_failure(), nullptr);
  EXPECT_EQ(report.first_failure()->index, 1);
}

TEST(Derivation, EveryStepIsSensitiveToItsMutationEdge) {
  const auto steps = identification_rule_steps();
  for (std::size_t i = 0; i < steps.size(); ++i) {
    CausalGraph g = build_training_graph();
    EXPECT_TRUE(steps[i].evaluate(g)) << "step " << i + 1;
    g.add_edge(steps[i].mutation.first, steps[i].mutation.second);
    EXPECT_FALSE(steps[i].evaluate(g)) << "step " << i + 1 << " with " << steps[i].mutation.first << "->"
                                       << steps[i].mutation.second;
  }
}

TEST(Derivation, MissingNodesAreAValidationError) {
  EXPECT_THROW(verify_eq1_derivation(chain3("A", "B", "C")), GraphError);
}

TEST(Intractability, AllStructureChecksHold) {
  const auto report = verify_intractability_structure();
  EXPECT_TRUE(report.all_passed()) << report.to_text();
  EXPECT_GE(report.checks.size(), 10u);
}

TEST(Intractability, DomainGraphFacts) {
  const CausalGraph f = build_domain_graph();
  EXPECT_FALSE(d_separated(f, {"D_X"}, {"Y"}, {}));
  EXPECT_TRUE(frontdoor_satisfied(f, "D_X", {"A"}, "Y"));
  CausalGraph cut = f;
  cut.remove_edge("U_XY", "D_X");
  EXPECT_TRUE(d_separated(cut, {"D_X"}, {"Y"}, {"A"}));
  EXPECT_EQ(directed_paths(f, "D_X", "Y").size(), 1u);
}

TEST(EdgeList, RoundTripAndRoles) {
  const CausalGraph g = build_training_graph();
  std::stringstream ss;
  write_edge_list(ss, g);
  const CausalGraph back = parse_edge_list(ss);
  EXPECT_TRUE(back == g);
}

TEST(EdgeList, ParsesCommentsAndRejectsGarbage) {
  std::istringstream ok("# a comment\n#role U latent\nU -> A\n  A->B  \n\n");
  const CausalGraph g = parse_edge_list(ok);
  EXPECT_EQ(g.size(), 3u);
  EXPECT_EQ(g.role("U"), NodeRole::latent);
  EXPECT_TRUE(g.has_edge("A", "B"));
  std::istringstream bad("A B\n");
  EXPECT_THROW(parse_edge_list(bad), GraphError);
  std::istringstream cyc("A -> B\nB -> A\n");
  EXPECT_THROW(parse_edge_list(cyc), GraphError);
  std::istringstream role("#role A sideways\n");
  EXPECT_THROW(parse_edge_list(role), GraphError);
}

// ---- discrete SCMs ----

namespace {

DiscreteSCM coin(double heads) {
  CausalGraph g;
  g.add_node("C");
  return DiscreteSCM(g, {{"C", 2}}, {{"C", {heads, 1.0 - heads}}});
}

// U -> X, U -> Y, X -> Y with random CPTs.
DiscreteSCM confounded(std::mt19937_64& rng) {
  CausalGraph g;
  g.add_node("U", NodeRole::latent);
  g.add_node("X");
  g.add_node("Y");
  g.add_edge("U", "X");
  g.add_edge("U", "Y");
  g.add_edge("X", "Y");
  return random_scm(g, rng, 2, 3);
}

int sample_node(const DiscreteSCM& scm, CausalGraph::Id v, const std::vector<int>& a, std::mt19937_64& rng) {
  const int k = scm.cardinality(v);
  const double* row = scm.cpt(v).data() + scm.row(v, a) * static_cast<std::size_t>(k);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (int j = 0; j < k - 1; ++j) {
    if (u < row[j]) return j;
    u -= row[j];
  }
  return k - 1;
}

}  // namespace

TEST(DiscreteScm, ValidatesTables) {
  CausalGraph g;
  g.add_node("A");
  EXPECT_THROW(DiscreteSCM(g, {{"A", 2}}, {{"A", {0.5, 0.6}}}), ScmError);
  EXPECT_THROW(DiscreteSCM(g, {{"A", 2}}, {{"A", {1.0}}}), ScmError);
  EXPECT_THROW(DiscreteSCM(g, {{"A", 1}}, {{"A", {1.0}}}), ScmError);
  EXPECT_THROW(DiscreteSCM(g, {}, {{"A", {0.5, 0.5}}}), ScmError);
}

TEST(ExactQuery, SingleCoinReturnsItsTable) {
  const auto p = exact_query(coin(0.3), {"C", {}, {}});
  EXPECT_DOUBLE_EQ(p[0], 0.3);
  EXPECT_DOUBLE_EQ(p[1], 0.7);
}

TEST(ExactQuery, UnconfoundedInterventionEqualsConditioning) {
  std::mt19937_64 rng(3);
  CausalGraph g;
  g.add_node("A");
  g.add_node("X");
  g.add_node("Y");
  g.add_edge("A", "X");
  g.add_edge("X", "Y");
  g.add_edge("A", "Y");  // A is observed but not conditioned on: still confounds.
  g.remove_edge("A", "Y");
  const DiscreteSCM scm = random_scm(g, rng);
  for (int x = 0; x < scm.cardinality("X"); ++x) {
    const auto d = exact_query(scm, {"Y", {{"X", x}}, {}});
    const auto c = exact_query(scm, {"Y", {}, {{"X", x}}});
    for (std::size_t y = 0; y < d.size(); ++y) EXPECT_NEAR(d[y], c[y], 1e-12);
  }
}

TEST(ExactQuery, MatchesSamplingOnConfoundedModel) {
  std::mt19937_64 rng(11);
  const DiscreteSCM scm = confounded(rng);
  const auto& g = scm.graph();
  const auto u = g.id("U"), xi = g.id("X"), yi = g.id("Y");
  const int n = 100000;
  const int x = 1;
  // Interventional: forward-sample the mutilated model.
  std::vector<int> counts(static_cast<std::size_t>(scm.cardinality(yi)), 0);
  std::vector<int> a(3, 0);
  for (int i = 0; i < n; ++i) {
    a[u] = sample_node(scm, u, a, rng);
    a[xi] = x;
    ++counts[static_cast<std::size_t>(sample_node(scm, yi, a, rng))];
  }
  const auto p_do = exact_query(scm, {"Y", {{"X", x}}, {}});
  for (std::size_t y = 0; y < counts.size(); ++y) {
    const double est = static_cast<double>(counts[y]) / n;
    const double se = std::sqrt(p_do[y] * (1.0 - p_do[y]) / n);
    EXPECT_LE(std::abs(est - p_do[y]), 3.0 * se) << "do y=" << y;
  }
  // Observational: rejection sampling on X == x.
  std::fill(counts.begin(), counts.end(), 0);
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    a[u] = sample_node(scm, u, a, rng);
    a[xi] = sample_node(scm, xi, a, rng);
    if (a[xi] != x) continue;
    ++kept;
    ++counts[static_cast<std::size_t>(sample_node(scm, yi, a, rng))];
  }
  const auto p_obs = exact_query(scm, {"Y", {}, {{"X", x}}});
  for (std::size_t y = 0; y < counts.size(); ++y) {
    const double est = static_cast<double>(counts[y]) / kept;
    const double se = std::sqrt(p_obs[y] * (1.0 - p_obs[y]) / kept);
    EXPECT_LE(std::abs(est - p_obs[y]), 3.0 * se) << "obs y=" << y;
  }
}

TEST(ExactQuery, OutputSumsToOneAndRejectsBadQueries) {
  std::mt19937_64 rng(17);
  const DiscreteSCM scm = confounded(rng);
  const auto p = exact_query(scm, {"Y", {{"X", 0}}, {{"U", 1}}});
  double s = 0;
  for (double v : p) s += v;
  EXPECT_NEAR(s, 1.0, 1e-9);
  EXPECT_THROW(exact_query(scm, {"Y", {{"X", 0}}, {{"X", 0}}}), ScmError);
  EXPECT_THROW(exact_query(scm, {"Y", {{"X", 9}}, {}}), ScmError);
}

TEST(ExactQuery, ZeroProbabilityEvidenceIsAnError) {
  CausalGraph g;
  g.add_node("A");
  g.add_node("B");
  g.add_edge("A", "B");
  const DiscreteSCM scm(g, {{"A", 2}, {"B", 2}}, {{"A", {1.0, 0.0}}, {"B", {0.5, 0.5, 0.5, 0.5}}});
  EXPECT_THROW(exact_query(scm, {"B", {}, {{"A", 1}}}), ZeroProbabilityError);
}

TEST(ExactQuery, StateSpaceGuard) {
  CausalGraph g;
  for (int i = 0; i < 24; ++i) g.add_node("N" + std::to_string(i));
  for (int i = 1; i < 24; ++i) g.add_edge("N" + std::to_string(i - 1), "N" + std::to_string(i));
  std::mt19937_64 rng(1);
  const DiscreteSCM scm = random_scm(g, rng, 3, 3);
  EXPECT_THROW(exact_query(scm, {"N23", {}, {}}), StateSpaceError);
}

TEST(Identification, FactorizedMatchesInterventionalOnRandomModels) {
  const auto a = check_identification_random(20, 77, 1e-9);
  EXPECT_EQ(a.agreements, 20);
  EXPECT_LE(a.max_abs_diff, 1e-9);
}

TEST(Identification, SingleQueryAgreesWithExactQuery) {
  std::mt19937_64 rng(8);
  const DiscreteSCM scm = random_scm(build_training_graph(), rng);
  const auto lhs = exact_query(scm, {"Y", {{"X", 1}}, {{"D_X", 0}, {"D_Y", 1}}});
  const auto rhs = eq1_factorized_query(scm, 1, 0, 1);
  ASSERT_EQ(lhs.size(), rhs.size());
  for (std::size_t y = 0; y < lhs.size(); ++y) EXPECT_NEAR(lhs[y], rhs[y], 1e-9);
}

TEST(Identification, DeterministicMechanismsAgreeWhereDefined) {
  std::mt19937_64 rng(31);
  const CausalGraph g = build_training_graph();
  int checked = 0;
  for (int i = 0; i < 200 && checked < 5; ++i) {
    const DiscreteSCM scm = random_scm(g, rng, 2, 3, true);
    const Table obs = joint_table(scm, {"X", "D_X", "D_Y"});
    for (int x = 0; x < scm.cardinality("X"); ++x)
      for (int dx = 0; dx < scm.cardinality("D_X"); ++dx)
        for (int dy = 0; dy < scm.cardinality("D_Y"); ++dy) {
          if (obs.at({x, dx, dy}) <= 0.0) continue;
          std::vector<double> lhs, rhs;
          try {
            lhs = exact_query(scm, {"Y", {{"X", x}}, {{"D_X", dx}, {"D_Y", dy}}});
            rhs = eq1_factorized_query(scm, x, dx, dy);
          } catch (const ZeroProbabilityError&) {
            continue;
          }
          for (std::size_t y = 0; y < lhs.size(); ++y) EXPECT_NEAR(lhs[y], rhs[y], 1e-12);
          ++checked;
        }
  }
  EXPECT_GE(checked, 5);
}

TEST(Identification, InertConfounderReducesToConditioning) {
  std::mt19937_64 rng(41);
  const CausalGraph g = build_training_graph();
  DiscreteSCM base = random_scm(g, rng);
  std::map<std::string, int> cards;
  std::map<std::string, std::vector<double>> cpts;
  for (const auto& n : g.node_names()) {
    cards[n] = base.cardinality(n);
    cpts[n] = base.cpt(n);
  }
  std::fill(cpts["U_XY"].begin(), cpts["U_XY"].end(), 0.0);
  cpts["U_XY"][0] = 1.0;
  const DiscreteSCM scm(g, cards, cpts);
  for (int x = 0; x < scm.cardinality("X"); ++x) {
    const auto f = eq1_factorized_query(scm, x, 0, 1);
    const auto c = exact_query(scm, {"Y", {}, {{"X", x}, {"D_X", 0}, {"D_Y", 1}}});
    for (std::size_t y = 0; y < f.size(); ++y) EXPECT_NEAR(f[y], c[y], 1e-9);
  }
}

TEST(Identification, RejectsOtherGraphs) {
  std::mt19937_64 rng(2);
  CausalGraph g = build_training_graph();
  g.add_edge("W", "X");
  const DiscreteSCM scm = random_scm(g, rng);
  EXPECT_THROW(eq1_factorized_query(scm, 0, 0, 0), ScmError);
}

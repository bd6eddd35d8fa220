#include <gtest/gtest.h>

#include <random>

#include "ele/errors.hpp"
#include "ele/graph.hpp"
#include "oracles.hpp"

namespace ele {
namespace {

const GraphSpace kSpace{4, 3, 3};

TEST(Relax, TwoNodesOneVirtualIsOneHot) {
  const GraphSpace space{2, 3, 2};
  const PaddedGraph g = pad(std::vector<int>{0}, {}, space);
  const auto r = relax<double>(g);
  Eigen::MatrixXd expected(2, 4);
  expected << 1, 0, 0, 0, 0, 0, 0, 1;
  EXPECT_EQ(r.nodes, expected);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_EQ(r.edges[0](i, j), 1.0);
      EXPECT_EQ(r.edges[1](i, j), 0.0);
    }
  }
}

TEST(Relax, EdgeLabelIsSymmetricOneHot) {
  const PaddedGraph g = pad(std::vector<int>{0, 1}, {{0, 1, 2}}, kSpace);
  const auto r = relax<double>(g);
  EXPECT_EQ(r.edges[2](0, 1), 1.0);
  EXPECT_EQ(r.edges[2](1, 0), 1.0);
  EXPECT_EQ(r.edges[0](0, 1), 0.0);
  EXPECT_NO_THROW(r.validate());
}

TEST(Relax, RejectsInvalidGraphNamingInvariant) {
  PaddedGraph g = pad(std::vector<int>{0, 1}, {{0, 1, 1}}, kSpace);
  g.edges(1, 0) = 2;
  try {
    relax<double>(g);
    FAIL() << "asymmetric edges accepted";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("symmetric"), std::string::npos);
  }
  PaddedGraph h = pad(std::vector<int>{0, 1}, {}, kSpace);
  h.edges(0, 3) = h.edges(3, 0) = 1;
  try {
    relax<double>(h);
    FAIL() << "edge to virtual node accepted";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("virtual"), std::string::npos);
  }
  PaddedGraph d = pad(std::vector<int>{0, 1}, {}, kSpace);
  d.edges(1, 1) = 1;
  EXPECT_THROW(relax<double>(d), ValidationError);
}

TEST(Unrelax, UniformRowPicksLowestLabel) {
  RelaxedGraph<double> r = relax<double>(pad(std::vector<int>{2}, {}, GraphSpace{1, 3, 2}));
  r.nodes.setConstant(0.25);
  const auto g = unrelax(r);
  ASSERT_EQ(g.num_nodes(), 1);
  EXPECT_EQ(g.nodes[0], 0);
}

TEST(Unrelax, AllVirtualGivesEmptyGraph) {
  RelaxedGraph<double> r = relax<double>(pad(std::vector<int>{0, 1, 2}, {{0, 1, 1}, {1, 2, 2}}, GraphSpace{3, 3, 3}));
  r.nodes.setZero();
  r.nodes.col(3).setOnes();
  const auto g = unrelax(r);
  EXPECT_EQ(g.num_nodes(), 0);
  EXPECT_TRUE(g.edges.empty());
}

TEST(Unrelax, ThreeNodeRoundtrip) {
  const VariableGraph v{{0, 2, 1}, {{0, 1, 1}, {1, 2, 2}}};
  EXPECT_EQ(unrelax(relax<double>(pad(v, kSpace))), v);
}

TEST(Unrelax, DropsEdgesOfVirtualNodes) {
  RelaxedGraph<double> r = relax<double>(pad(std::vector<int>{0, 1, 2}, {{0, 1, 1}, {1, 2, 2}}, kSpace));
  r.nodes.row(1).setZero();
  r.nodes(1, 3) = 1.0;
  const auto g = unrelax(r);
  EXPECT_EQ(g.nodes, (std::vector<int>{0, 2}));
  EXPECT_TRUE(g.edges.empty());
}

TEST(Pad, AppendsVirtualNodes) {
  const PaddedGraph g = pad(std::vector<int>{0, 1}, {{0, 1, 1}}, kSpace);
  EXPECT_EQ(g.nodes, (std::vector<int>{0, 1, 3, 3}));
  EXPECT_EQ(g.edges.rows(), 4);
  EXPECT_EQ(g.edges, g.edges.transpose());
  EXPECT_EQ(g.num_real(), 2);
}

TEST(Pad, FullGraphHasNoVirtualNodes) {
  const PaddedGraph g = pad(std::vector<int>{0, 1, 2, 0}, {}, kSpace);
  EXPECT_EQ(g.num_real(), 4);
}

TEST(Pad, Errors) {
  EXPECT_THROW(pad(std::vector<int>{0, 1, 2, 0, 1}, {}, kSpace), CapacityError);
  EXPECT_THROW(pad(std::vector<int>{0, 1}, {{0, 1, 1}, {1, 0, 2}}, kSpace), ValidationError);
  EXPECT_THROW(pad(std::vector<int>{0, 1}, {{0, 0, 1}}, kSpace), ValidationError);
  EXPECT_THROW(pad(std::vector<int>{0, 1}, {{0, 2, 1}}, kSpace), ValidationError);
  EXPECT_THROW(pad(std::vector<int>{0, 3}, {}, kSpace), ValidationError);
  EXPECT_NO_THROW(pad(std::vector<int>{0, 1}, {{0, 1, 1}, {1, 0, 1}}, kSpace));
}

TEST(Pad, IdempotentOnRealNodes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const PaddedGraph g = testing::random_padded(rng, kSpace);
    EXPECT_EQ(pad(strip(g), kSpace), g);
  }
}

TEST(GraphProperties, RoundtripOverRandomGraphs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1500; ++trial) {
    const GraphSpace space{std::uniform_int_distribution<int>(1, 9)(rng), std::uniform_int_distribution<int>(1, 5)(rng),
                           std::uniform_int_distribution<int>(1, 4)(rng)};
    const PaddedGraph g = testing::random_padded(rng, space, 0.5);
    const auto r = relax<double>(g);
    ASSERT_NO_THROW(r.validate());
    const VariableGraph back = unrelax(r);
    ASSERT_EQ(back, strip(g));
    for (const auto& e : back.edges) ASSERT_GT(e.label, 0);
    ASSERT_EQ(round_to_padded(r, space.node_labels), g);
  }
}

TEST(GraphProperties, PermutationActsConsistently) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const PaddedGraph g = testing::random_padded(rng, kSpace);
    const auto perm = testing::random_permutation(rng, kSpace.m_max);
    const auto lhs = relax<double>(permute(g, perm));
    const auto rhs = permute(relax<double>(g), perm);
    ASSERT_TRUE(lhs.nodes.isApprox(rhs.nodes));
    for (std::size_t s = 0; s < lhs.edges.size(); ++s) ASSERT_EQ(lhs.edges[s], rhs.edges[s]);
  }
}

TEST(LabelAlphabets, Validation) {
  LabelAlphabets a{{"C", "N"}, {"none", "single"}};
  EXPECT_NO_THROW(a.validate());
  EXPECT_EQ(a.node_id("N"), 1);
  EXPECT_EQ(a.virtual_id(), 2);
  EXPECT_THROW(a.node_id("O"), ValidationError);
  LabelAlphabets dup{{"C", "C"}, {"none"}};
  EXPECT_THROW(dup.validate(), ValidationError);
  LabelAlphabets no_edges{{"C"}, {}};
  EXPECT_THROW(no_edges.validate(), ValidationError);
  LabelAlphabets clash{{"*"}, {"none"}};
  EXPECT_THROW(clash.validate(), ValidationError);
}

TEST(RelaxedGraph, ValidateCatchesViolations) {
  auto r = relax<double>(pad(std::vector<int>{0, 1}, {{0, 1, 1}}, kSpace));
  auto bad = r;
  bad.nodes(0, 0) = 0.5;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = r;
  bad.edges[1](0, 1) = 0.5;
  bad.edges[0](0, 1) = 0.5;
  EXPECT_THROW(bad.validate(), ValidationError);
}

}  // namespace
}  // namespace ele

#include <gtest/gtest.h>

#include <random>

#include "ele/errors.hpp"
#include "ele/ged.hpp"
#include "oracles.hpp"

namespace ele {
namespace {

const VariableGraph kPath{{0, 1, 2}, {{0, 1, 1}, {1, 2, 2}}};

TEST(Ged, Examples) {
  EXPECT_EQ(ged(kPath, kPath), 0.0);
  VariableGraph relabeled = kPath;
  relabeled.nodes[2] = 0;
  EXPECT_EQ(ged(kPath, relabeled), 1.0);
  VariableGraph grown = kPath;
  grown.nodes.push_back(1);
  grown.edges.push_back({2, 3, 1});
  EXPECT_EQ(ged(kPath, grown), 2.0);
  EXPECT_EQ(ged(VariableGraph{}, kPath), 5.0);
  EXPECT_EQ(ged(VariableGraph{}, VariableGraph{}), 0.0);
}

TEST(Ged, EdgeLabelsCanBeIgnored) {
  VariableGraph other = kPath;
  other.edges[1].label = 1;
  EXPECT_EQ(ged(kPath, other), 1.0);
  EditCosts plain;
  plain.use_edge_labels = false;
  EXPECT_EQ(ged(kPath, other, plain), 0.0);
}

TEST(Ged, IsomorphicGraphsAreAtDistanceZero) {
  const VariableGraph permuted{{2, 1, 0}, {{0, 1, 2}, {1, 2, 1}}};
  EXPECT_EQ(ged(kPath, permuted), 0.0);
}

TEST(Ged, MatchesBruteForceOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(0, 5);
  std::uniform_real_distribution<double> density(0.1, 0.8);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = testing::random_graph(rng, size(rng), 3, 3, density(rng));
    const auto b = testing::random_graph(rng, size(rng), 3, 3, density(rng));
    const bool labels = trial % 4 != 0;
    EditCosts costs;
    costs.use_edge_labels = labels;
    const double d = ged(a, b, costs);
    ASSERT_EQ(d, testing::ged_oracle(a, b, labels)) << "trial " << trial;
    ASSERT_EQ(d, ged(b, a, costs));
    ASSERT_EQ(d == 0.0, testing::ged_oracle(a, b, labels) == 0.0);
  }
}

TEST(Ged, TriangleInequality) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = testing::random_graph(rng, size(rng), 2, 3, 0.4);
    const auto b = testing::random_graph(rng, size(rng), 2, 3, 0.4);
    const auto c = testing::random_graph(rng, size(rng), 2, 3, 0.4);
    ASSERT_LE(ged(a, c), ged(a, b) + ged(b, c));
  }
}

TEST(Ged, HandlesTenNodeGraphs) {
  std::mt19937_64 rng(3);
  const auto a = testing::random_graph(rng, 10, 3, 3, 0.25);
  auto b = a;
  b.nodes[0] = (b.nodes[0] + 1) % 3;
  EXPECT_EQ(ged(a, b), 1.0);
}

TEST(Ged, Errors) {
  std::mt19937_64 rng(4);
  const auto big = testing::random_graph(rng, kMaxExactGedNodes + 1, 2, 2, 0.2);
  EXPECT_THROW(ged(big, kPath), CapacityError);
  EditCosts negative;
  negative.node_deletion = -1;
  EXPECT_THROW(ged(kPath, kPath, negative), ConfigError);
}

}  // namespace
}  // namespace ele

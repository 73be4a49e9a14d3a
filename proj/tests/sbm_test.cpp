#include "fgu/sbm.hpp"

#include <gtest/gtest.h>

namespace fgu {
namespace {

TEST(Sbm, ZeroProbabilityMeansNoEdges) {
  const Graph g = sbm_generate({{50, 0}, {50, 1}}, 0.0, 0.0, 4, 7);
  EXPECT_EQ(g.num_nodes, 100);
  EXPECT_TRUE(g.edges.empty());
}

TEST(Sbm, UnitInBlockProbabilityMakesCliques) {
  const Graph g = sbm_generate({{50, 0}, {50, 1}}, 1.0, 0.0, 4, 7);
  // two cliques: 2 * C(50,2)
  EXPECT_EQ(g.edges.size(), 2u * (50 * 49 / 2));
}

TEST(Sbm, EdgeCountWithinFourSigma) {
  const Graph g = sbm_generate({{100, 0}, {100, 1}}, 0.1, 0.01, 4, 123);
  // within-block pairs: 2*C(100,2); cross pairs: 100*100
  const double mean = 2 * (100 * 99 / 2) * 0.1 + 100 * 100 * 0.01;
  const double var =
      2 * (100 * 99 / 2) * 0.1 * 0.9 + 100 * 100 * 0.01 * 0.99;
  const double sigma = std::sqrt(var);
  EXPECT_NEAR(static_cast<double>(g.edges.size()), mean, 4.0 * sigma);
}

TEST(Sbm, DeterministicPerSeed) {
  const Graph a = sbm_generate({{30, 0}, {30, 1}, {30, 2}}, 0.2, 0.02, 8, 42);
  const Graph b = sbm_generate({{30, 0}, {30, 1}, {30, 2}}, 0.2, 0.02, 8, 42);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.masks.train, b.masks.train);
  // bitwise features
  ASSERT_EQ(a.features.size(), b.features.size());
  for (Eigen::Index i = 0; i < a.features.size(); ++i)
    EXPECT_EQ(a.features.data()[i], b.features.data()[i]);
}

TEST(Sbm, DifferentSeedsDiffer) {
  const Graph a = sbm_generate({{40, 0}, {40, 1}}, 0.2, 0.02, 4, 1);
  const Graph b = sbm_generate({{40, 0}, {40, 1}}, 0.2, 0.02, 4, 2);
  EXPECT_NE(a.edges, b.edges);
}

TEST(Sbm, LabelsFollowBlockClassIds) {
  const Graph g = sbm_generate({{10, 2}, {10, 0}, {10, 2}}, 0.3, 0.0, 4, 9);
  EXPECT_EQ(g.num_classes, 3);
  for (int v = 0; v < 10; ++v) EXPECT_EQ(g.labels[v], 2);
  for (int v = 10; v < 20; ++v) EXPECT_EQ(g.labels[v], 0);
  for (int v = 20; v < 30; ++v) EXPECT_EQ(g.labels[v], 2);
}

TEST(Sbm, MasksCoverAllNodesDisjointly) {
  const Graph g = sbm_generate({{40, 0}, {40, 1}}, 0.1, 0.01, 4, 5);
  EXPECT_EQ(g.masks.train.size() + g.masks.val.size() + g.masks.test.size(),
            static_cast<std::size_t>(g.num_nodes));
  EXPECT_NO_THROW(g.validate());
}

TEST(Sbm, RejectsBadParameters) {
  EXPECT_THROW(sbm_generate({{10, 0}}, 1.5, 0.0, 4, 1), std::invalid_argument);
  EXPECT_THROW(sbm_generate({{0, 0}}, 0.5, 0.0, 4, 1), std::invalid_argument);
  EXPECT_THROW(sbm_generate({}, 0.5, 0.0, 4, 1), std::invalid_argument);
}

}  // namespace
}  // namespace fgu

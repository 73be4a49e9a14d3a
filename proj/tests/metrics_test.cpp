#include "fgu/metrics.hpp"

#include <gtest/gtest.h>

#include "fgu/sbm.hpp"
#include "test_util.hpp"

namespace fgu {
namespace {

// Trapezoidal ROC integral, the cross-check for the rank-statistic AUC.
// Thresholds descend over the merged unique scores; ties are grouped.
double auc_trapezoid(const std::vector<double>& members,
                     const std::vector<double>& non_members) {
  std::vector<double> thresholds;
  thresholds.insert(thresholds.end(), members.begin(), members.end());
  thresholds.insert(thresholds.end(), non_members.begin(), non_members.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  double auc = 0.0, prev_tpr = 0.0, prev_fpr = 0.0;
  for (double t : thresholds) {
    int tp = 0, fp = 0;
    for (double m : members)
      if (m >= t) ++tp;
    for (double n : non_members)
      if (n >= t) ++fp;
    const double tpr = static_cast<double>(tp) / members.size();
    const double fpr = static_cast<double>(fp) / non_members.size();
    auc += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  auc += 0.5 * (1.0 + prev_tpr) * (1.0 - prev_fpr);
  return auc;
}

TEST(Accuracy, PerfectAndTieCases) {
  Graph g;
  g.num_nodes = 4;
  g.num_classes = 2;
  g.features = Mat::Zero(4, 2);
  g.labels = {0, 1, 0, 1};
  g.validate();
  ModelParams p;
  p.backbone = Backbone::kSgc;
  p.propagation_depth = 1;
  Mat w(2, 2);
  w << 1, 0, 0, 1;
  p.tensors.push_back({"w", w});
  g.features << 1, 0, 0, 1, 1, 0, 0, 1;  // logits reproduce one-hot labels
  EXPECT_DOUBLE_EQ(accuracy(p, g, {0, 1, 2, 3}), 1.0);

  // constant logits: ties resolve to class 0, so exactly the class-0
  // fraction of the mask is counted correct
  g.features.setZero();
  EXPECT_DOUBLE_EQ(accuracy(p, g, {0, 1, 2, 3}), 0.5);
  EXPECT_DOUBLE_EQ(accuracy(p, g, {0}), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(p, g, {1}), 0.0);
}

TEST(Accuracy, EmptyMaskThrows) {
  const Graph g = testutil::two_cliques(3);
  const ModelParams p = init_params(Backbone::kGcn, g.feature_dim(), 4, 2, 1);
  EXPECT_THROW(accuracy(p, g, {}), std::invalid_argument);
}

TEST(Accuracy, InvariantUnderMonotoneRescaling) {
  const Graph g = testutil::two_cliques(6);
  ModelParams p = init_params(Backbone::kGcn, g.feature_dim(), 5, 2, 9);
  std::vector<int> all(g.num_nodes);
  std::iota(all.begin(), all.end(), 0);
  const double base = accuracy(p, g, all);
  for (auto& t : p.tensors) t.value *= 1.0;  // identity
  ModelParams scaled = p;
  scaled.tensor("w2") *= 3.0;  // positive rescale of logits
  EXPECT_DOUBLE_EQ(accuracy(scaled, g, all), base);
}

TEST(MiaAuc, RankEqualsTrapezoidOnRandomScores) {
  Rng rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> members, non_members;
    const int nm = 3 + rng.uniform_int(0, 20);
    const int nn = 3 + rng.uniform_int(0, 20);
    for (int i = 0; i < nm; ++i)
      members.push_back(rng.uniform_int(0, 6) * 0.25);  // forced ties
    for (int i = 0; i < nn; ++i) non_members.push_back(rng.uniform_int(0, 6) * 0.25);
    EXPECT_NEAR(auc_rank(members, non_members),
                auc_trapezoid(members, non_members), 1e-12);
  }
}

TEST(MiaAuc, IdenticalDistributionsGiveHalf) {
  const std::vector<double> scores = {0.1, 0.5, 0.9, 0.3};
  EXPECT_DOUBLE_EQ(auc_rank(scores, scores), 0.5);
}

TEST(MiaAttack, SeparableSetsGivePerfectAttack) {
  // members all loss 0.1 (score -0.1), non-members all loss 2.0 (score -2.0)
  const std::vector<double> members(5, -0.1), non_members(7, -2.0);
  EXPECT_DOUBLE_EQ(auc_rank(members, non_members), 1.0);

  // through the full attack path on a graph where train nodes have tiny loss
  SbmConfig cfg;
  cfg.blocks = {{30, 0}, {30, 1}};
  cfg.p_in = 0.25;
  cfg.p_out = 0.01;
  cfg.feature_dim = 8;
  const Graph g = sbm_generate(cfg, 40);
  ModelParams p = init_params(Backbone::kGcn, 8, 16, 2, 4);
  p = train_local(p, g, {.epochs = 60, .lr = 0.05});
  const auto result = mia_attack(p, g.masks.train, g.masks.test, g);
  EXPECT_GT(result.auc, 0.45);
  EXPECT_LE(result.auc, 1.0);
  EXPECT_GE(result.accuracy, 0.5);
}

TEST(MiaAttack, RejectsBadSets) {
  const Graph g = testutil::two_cliques(4);
  const ModelParams p = init_params(Backbone::kGcn, g.feature_dim(), 4, 2, 2);
  EXPECT_THROW(mia_attack(p, {}, {1}, g), std::invalid_argument);
  EXPECT_THROW(mia_attack(p, {0}, {}, g), std::invalid_argument);
  EXPECT_THROW(mia_attack(p, {0, 1}, {1, 2}, g), std::invalid_argument);
}

TEST(ModelDistance, IdenticalModelsAreZeroApart) {
  const Graph g = testutil::two_cliques(4);
  const ModelParams p = init_params(Backbone::kGcn, g.feature_dim(), 4, 2, 6);
  const auto d = model_distance(p, p, g);
  EXPECT_DOUBLE_EQ(d.l2, 0.0);
  EXPECT_DOUBLE_EQ(d.agreement, 1.0);
}

TEST(ModelDistance, SingleWeightShiftHasUnitNorm) {
  const Graph g = testutil::two_cliques(4);
  const ModelParams a = init_params(Backbone::kGcn, g.feature_dim(), 4, 2, 6);
  ModelParams b = a;
  b.tensor("w1")(0, 0) += 1.0;
  EXPECT_DOUBLE_EQ(model_distance(a, b, g).l2, 1.0);
}

TEST(ModelDistance, LayoutMismatchThrows) {
  const Graph g = testutil::two_cliques(4);
  const ModelParams a = init_params(Backbone::kGcn, g.feature_dim(), 4, 2, 6);
  const ModelParams b = init_params(Backbone::kGcn, g.feature_dim(), 5, 2, 6);
  EXPECT_THROW(model_distance(a, b, g), std::invalid_argument);
}

TEST(EdgeAttack, ZeroRatioChangesNothing) {
  std::vector<Graph> graphs = {testutil::two_cliques(5), testutil::path_graph(6)};
  const auto before = graphs[0].edges;
  const auto lists = inject_edge_attack(graphs, 0.0, 3);
  EXPECT_TRUE(lists[0].empty());
  EXPECT_TRUE(lists[1].empty());
  EXPECT_EQ(graphs[0].edges, before);
}

TEST(EdgeAttack, AddsExactCountOfFreshEdges) {
  std::vector<Graph> graphs = {testutil::path_graph(5, 2, 3)};  // 4 edges
  const Graph original = graphs[0];
  const auto lists = inject_edge_attack(graphs, 0.7, 9);  // ceil(2.8) = 3
  ASSERT_EQ(lists[0].size(), 3u);
  EXPECT_EQ(graphs[0].edges.size(), original.edges.size() + 3);
  for (const auto& [u, v] : lists[0]) {
    EXPECT_FALSE(original.has_edge(u, v));
    EXPECT_TRUE(graphs[0].has_edge(u, v));
    EXPECT_NE(u, v);
  }
  EXPECT_NO_THROW(graphs[0].validate());
}

TEST(EdgeAttack, PrefersHeterophilousPairs) {
  std::vector<Graph> graphs = {testutil::two_cliques(6)};  // no cross edges yet
  const auto lists = inject_edge_attack(graphs, 0.2, 5);
  ASSERT_FALSE(lists[0].empty());
  for (const auto& [u, v] : lists[0])
    EXPECT_NE(graphs[0].labels[u], graphs[0].labels[v]);
}

TEST(EdgeAttack, TooDenseThrows) {
  Graph clique = testutil::two_cliques(3);
  clique.edges.clear();
  for (int u = 0; u < 6; ++u)
    for (int v = u + 1; v < 6; ++v) clique.edges.emplace_back(u, v);
  clique.validate();
  std::vector<Graph> graphs = {clique};
  EXPECT_THROW(inject_edge_attack(graphs, 0.5, 1), std::runtime_error);
}

TEST(EdgeAttack, DeterministicPerSeed) {
  std::vector<Graph> a = {testutil::two_cliques(6)};
  std::vector<Graph> b = {testutil::two_cliques(6)};
  EXPECT_EQ(inject_edge_attack(a, 0.3, 77), inject_edge_attack(b, 0.3, 77));
}

}  // namespace
}  // namespace fgu

#include "fgu/distill.hpp"

#include <gtest/gtest.h>

#include "fgu/louvain.hpp"
#include "fgu/sbm.hpp"
#include "test_util.hpp"

namespace fgu {
namespace {

struct Fixture {
  Graph local;
  ModelParams client;
  ModelParams unlearned;
  AdversarialGraph adv;
};

Fixture make_fixture(std::uint64_t seed) {
  SbmConfig cfg;
  cfg.blocks = {{25, 0}, {25, 1}};
  cfg.p_in = 0.25;
  cfg.p_out = 0.02;
  cfg.feature_dim = 6;
  Fixture f;
  f.local = sbm_generate(cfg, seed);
  f.client = train_local(init_params(Backbone::kGcn, 6, 8, 2, seed), f.local,
                         {.epochs = 15, .lr = 1e-2});
  f.unlearned = init_params(Backbone::kGcn, 6, 8, 2, seed + 100);
  AdvConfig adv_cfg;
  adv_cfg.nodes = 12;
  adv_cfg.seed = seed;
  adv_cfg.max_iters = 20;
  f.adv = generate(f.client, f.unlearned, adv_cfg);
  return f;
}

TEST(Distill, SelfDistillationIsFixedPoint) {
  const Fixture f = make_fixture(3);
  DistillConfig cfg;
  cfg.alpha = 0.0;
  cfg.epochs = 5;
  // student = teacher and alpha = 0: KL gradient vanishes, Adam stays put
  const ModelParams out = distill(f.client, f.unlearned, f.local, f.adv, cfg);
  EXPECT_TRUE(bitwise_equal(out, f.client));
}

TEST(Distill, ZeroEpochsKeepsParams) {
  const Fixture f = make_fixture(5);
  DistillConfig cfg;
  cfg.epochs = 0;
  const ModelParams out = distill(f.client, f.unlearned, f.local, f.adv, cfg);
  EXPECT_TRUE(bitwise_equal(out, f.client));
}

TEST(Distill, CombinedLossDecreases) {
  const Fixture f = make_fixture(7);
  std::vector<double> losses;
  DistillConfig cfg;
  cfg.alpha = 5.0;
  cfg.epochs = 25;
  cfg.lr = 1e-2;
  cfg.loss_log = &losses;
  const ModelParams out = distill(f.client, f.unlearned, f.local, f.adv, cfg);
  ASSERT_EQ(losses.size(), 25u);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_TRUE(out.all_finite());
}

TEST(Distill, AlphaTradeoffDirection) {
  const Fixture f = make_fixture(9);
  const Graph probe = f.adv.as_graph(2);
  const Mat teacher_pos = softmax_rows(forward(f.client, f.local));
  const Mat teacher_neg = forward(f.unlearned, probe);

  auto terminal_losses = [&](double alpha) {
    DistillConfig cfg;
    cfg.alpha = alpha;
    cfg.epochs = 30;
    cfg.lr = 1e-2;
    const ModelParams out = distill(f.client, f.unlearned, f.local, f.adv, cfg);
    const double pos =
        kl_soft(forward(out, f.local), teacher_pos, f.local.masks.train).value;
    const double neg = mse_vs_logits(forward(out, probe), teacher_neg).value;
    return std::pair<double, double>{pos, neg};
  };

  const auto [pos0, neg0] = terminal_losses(0.0);
  const auto [pos1, neg1] = terminal_losses(1.0);
  const auto [pos5, neg5] = terminal_losses(5.0);
  // more weight on the negative term: weakly larger positive loss,
  // weakly smaller negative loss
  EXPECT_LE(pos0, pos1 + 1e-12);
  EXPECT_LE(pos1, pos5 + 1e-12);
  EXPECT_GE(neg0, neg1 - 1e-12);
  EXPECT_GE(neg1, neg5 - 1e-12);
}

TEST(Distill, RejectsMismatchedLayouts) {
  const Fixture f = make_fixture(11);
  const ModelParams other = init_params(Backbone::kGcn, 6, 4, 2, 1);
  DistillConfig cfg;
  EXPECT_THROW(distill(f.client, other, f.local, f.adv, cfg), std::invalid_argument);
}

TEST(DistillRound, EmptyInfluencedSetIsNoOp) {
  SbmConfig sbm;
  sbm.blocks = {{30, 0}, {30, 1}, {30, 2}};
  sbm.p_in = 0.2;
  sbm.feature_dim = 6;
  const Graph g = sbm_generate(sbm, 13);
  const Partition part = louvain_partition(g, 3, 0);
  std::vector<Graph> clients;
  for (int c = 0; c < 3; ++c) clients.push_back(client_subgraph(g, part, c));
  auto state = make_federation(clients, Backbone::kGcn, 8, 5, {});
  run_training(state, 2);
  const auto before = state.client_params;

  const Fixture f = make_fixture(13);
  DistillConfig cfg;
  distill_round(state, {}, state.global, f.adv, cfg);
  for (int c = 0; c < 3; ++c)
    EXPECT_TRUE(bitwise_equal(state.client_params[c], before[c]));
}

TEST(DistillRound, OnlyInfluencedClientsChangeAndGraphsSurvive) {
  SbmConfig sbm;
  sbm.blocks = {{30, 0}, {30, 1}, {30, 2}};
  sbm.p_in = 0.2;
  sbm.p_out = 0.02;
  sbm.feature_dim = 6;
  const Graph g = sbm_generate(sbm, 17);
  const Partition part = louvain_partition(g, 3, 0);
  std::vector<Graph> clients;
  for (int c = 0; c < 3; ++c) clients.push_back(client_subgraph(g, part, c));
  auto state = make_federation(clients, Backbone::kGcn, 8, 5, {});
  run_training(state, 3);
  const auto params_before = state.client_params;
  const auto edges_before = state.client_graphs[1].edges;

  AdvConfig adv_cfg;
  adv_cfg.nodes = 10;
  adv_cfg.seed = 3;
  adv_cfg.max_iters = 10;
  const ModelParams noise = init_params(Backbone::kGcn, 6, 8, 3, 999);
  const auto adv = generate(state.client_params[0], noise, adv_cfg);

  DistillConfig cfg;
  cfg.alpha = 1.0;
  cfg.epochs = 3;
  distill_round(state, {0, 2}, noise, adv, cfg);
  EXPECT_FALSE(bitwise_equal(state.client_params[0], params_before[0]));
  EXPECT_TRUE(bitwise_equal(state.client_params[1], params_before[1]));
  EXPECT_FALSE(bitwise_equal(state.client_params[2], params_before[2]));
  EXPECT_EQ(state.client_graphs[1].edges, edges_before);
}

}  // namespace
}  // namespace fgu

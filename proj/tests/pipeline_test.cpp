#include "fgu/pipeline.hpp"

#include <gtest/gtest.h>

#include "fgu/louvain.hpp"
#include "fgu/metrics.hpp"
#include "fgu/sbm.hpp"
#include "test_util.hpp"

namespace fgu {
namespace {

SbmConfig toy_sbm() {
  SbmConfig cfg;
  cfg.blocks = {{30, 0}, {30, 1}, {30, 2}, {30, 0}, {30, 1}, {30, 2}};
  cfg.p_in = 0.2;
  cfg.p_out = 0.01;
  cfg.feature_dim = 8;
  return cfg;
}

struct Harness {
  std::vector<Graph> clients;
  FederationState state;
  PageConfig page;
};

Harness trained_setup(std::uint64_t seed, int num_clients = 3, int rounds = 4) {
  const Graph g = sbm_generate(toy_sbm(), seed);
  const Partition part = louvain_partition(g, num_clients, 0);
  Harness s;
  for (int c = 0; c < num_clients; ++c) s.clients.push_back(client_subgraph(g, part, c));
  FederationConfig cfg;
  cfg.rounds = rounds;
  cfg.local_epochs = 3;
  cfg.lr = 1e-2;
  s.state = make_federation(s.clients, Backbone::kGcn, 16, seed + 1, cfg);
  run_training(s.state, rounds);
  s.page.adv.nodes = 12;
  s.page.adv.max_iters = 15;
  s.page.adv.seed = seed + 2;
  s.page.noise_seed = seed + 3;
  s.page.unlearn.epochs = 2;
  s.page.unlearn.lr = 1e-3;
  s.page.distill.epochs = 2;
  s.page.distill.alpha = 1.0;
  return s;
}

MetaRemoval sample_removal(const Graph& g, int client_id, int count) {
  MetaRemoval r;
  r.client_id = client_id;
  for (int v = 0; v < count && v < g.num_nodes; ++v) r.removed_nodes.push_back(v * 2);
  return r;
}

TEST(MetaPipeline, EmptyRequestRunsNoStages) {
  Harness s = trained_setup(3);
  const auto params_before = s.state.client_params;
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kMeta;
  request.removals.push_back(MetaRemoval{.client_id = 0});
  const auto outcome = meta_unlearn_pipeline(s.state, request, s.page);
  EXPECT_TRUE(outcome.adversarial.empty());
  EXPECT_TRUE(outcome.influenced.empty());
  EXPECT_DOUBLE_EQ(outcome.timings.prototype_sec, 0.0);
  EXPECT_DOUBLE_EQ(outcome.timings.adversarial_sec, 0.0);
  EXPECT_DOUBLE_EQ(outcome.timings.distill_sec, 0.0);
  // theta_bar is the plain aggregate of the unchanged client params
  std::vector<long long> weights;
  for (const auto& g : s.state.client_graphs)
    weights.push_back(static_cast<long long>(g.masks.train.size()));
  EXPECT_TRUE(bitwise_equal(outcome.global_unlearned,
                            aggregate(params_before, weights)));
}

TEST(MetaPipeline, ForgottenNodesLeaveEveryGraph) {
  Harness s = trained_setup(5);
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kMeta;
  request.removals.push_back(sample_removal(s.state.client_graphs[1], 1, 6));
  const int nodes_before = s.state.client_graphs[1].num_nodes;
  const auto outcome = meta_unlearn_pipeline(s.state, request, s.page);
  EXPECT_EQ(outcome.forgotten_origins.size(), 6u);
  EXPECT_EQ(s.state.client_graphs[1].num_nodes, nodes_before - 6);
  EXPECT_TRUE(forgotten_data_absent(s.state, outcome.forgotten_origins));
  // executed stages have strictly positive recorded wall time
  EXPECT_GT(outcome.timings.prototype_sec, 0.0);
  EXPECT_GT(outcome.timings.adversarial_sec, 0.0);
  EXPECT_GT(outcome.timings.total_sec, 0.0);
  EXPECT_EQ(outcome.adversarial.size(), 1u);
  EXPECT_EQ(outcome.adversarial[0].client, 1);
}

TEST(MetaPipeline, DeterministicPerSeed) {
  auto run_once = [&] {
    Harness s = trained_setup(7);
    UnlearnRequest request;
    request.kind = UnlearnRequest::Kind::kMeta;
    request.removals.push_back(sample_removal(s.state.client_graphs[0], 0, 5));
    return meta_unlearn_pipeline(s.state, request, s.page);
  };
  const auto a = run_once();
  const auto b = run_once();
  EXPECT_TRUE(bitwise_equal(a.global_unlearned, b.global_unlearned));
  EXPECT_EQ(a.influenced, b.influenced);
  EXPECT_EQ(a.forgotten_origins, b.forgotten_origins);
  EXPECT_EQ(a.adversarial.size(), b.adversarial.size());
  EXPECT_EQ(a.adversarial[0].final_losses.adv, b.adversarial[0].final_losses.adv);
}

TEST(MetaPipeline, MultipleRequestersProcessedAscending) {
  Harness s = trained_setup(9);
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kMeta;
  request.removals.push_back(sample_removal(s.state.client_graphs[2], 2, 4));
  request.removals.push_back(sample_removal(s.state.client_graphs[0], 0, 4));
  const auto outcome = meta_unlearn_pipeline(s.state, request, s.page);
  ASSERT_EQ(outcome.adversarial.size(), 2u);
  EXPECT_EQ(outcome.adversarial[0].client, 0);
  EXPECT_EQ(outcome.adversarial[1].client, 2);
  EXPECT_TRUE(forgotten_data_absent(s.state, outcome.forgotten_origins));
}

TEST(MetaPipeline, RejectsDuplicateAndUnknownClients) {
  Harness s = trained_setup(11);
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kMeta;
  request.removals.push_back(sample_removal(s.state.client_graphs[0], 0, 2));
  request.removals.push_back(sample_removal(s.state.client_graphs[0], 0, 3));
  EXPECT_THROW(meta_unlearn_pipeline(s.state, request, s.page), std::invalid_argument);
  Harness s2 = trained_setup(11);
  UnlearnRequest bad;
  bad.kind = UnlearnRequest::Kind::kMeta;
  bad.removals.push_back(MetaRemoval{.client_id = 99, .removed_nodes = {0}});
  EXPECT_THROW(meta_unlearn_pipeline(s2.state, bad, s2.page), std::invalid_argument);
}

TEST(ClientPipeline, DepartingClientLeavesFederation) {
  Harness s = trained_setup(13, 4);
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kClient;
  request.departing_clients = {1};
  const auto outcome = client_unlearn_pipeline(s.state, request, s.page);
  EXPECT_EQ(s.state.num_clients(), 3);
  EXPECT_EQ(outcome.retained_clients, (std::vector<int>{0, 2, 3}));
  EXPECT_EQ(outcome.adversarial.size(), 1u);
  EXPECT_EQ(outcome.adversarial[0].client, 1);
  // theta_bar re-aggregates to itself over the retained clients
  const auto again = aggregate(s.state.client_params, s.state.weights());
  EXPECT_TRUE(bitwise_equal(again, outcome.global_unlearned));
}

TEST(ClientPipeline, NoInfluencePathMeansUntouchedRetainedParams) {
  Harness s = trained_setup(15, 4);
  s.page.tau = 1.0 + 1e-9;  // unreachable: no influenced clients
  const auto params_before = s.state.client_params;
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kClient;
  request.departing_clients = {2};
  const auto outcome = client_unlearn_pipeline(s.state, request, s.page);
  EXPECT_TRUE(outcome.influenced.empty());
  std::vector<ModelParams> retained = {params_before[0], params_before[1],
                                       params_before[3]};
  for (int i = 0; i < 3; ++i)
    EXPECT_TRUE(bitwise_equal(s.state.client_params[i], retained[i]));
  std::vector<long long> weights;
  for (const auto& g : s.state.client_graphs)
    weights.push_back(static_cast<long long>(g.masks.train.size()));
  EXPECT_TRUE(bitwise_equal(outcome.global_unlearned, aggregate(retained, weights)));
}

TEST(ClientPipeline, RejectsFullDeparture) {
  Harness s = trained_setup(17, 3);
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kClient;
  request.departing_clients = {0, 1, 2};
  EXPECT_THROW(client_unlearn_pipeline(s.state, request, s.page),
               std::invalid_argument);
}

TEST(RetrainOracle, EmptyRequestReproducesTrainingBitwise) {
  Harness s = trained_setup(19);
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kMeta;  // no removals at all
  const ModelParams theta_star =
      retrain_oracle(s.clients, request, Backbone::kGcn, 16, 19 + 1, s.state.config);
  EXPECT_TRUE(bitwise_equal(theta_star, s.state.global));
}

TEST(RetrainOracle, RemovedNodesAppearInNoTrainMask) {
  Harness s = trained_setup(21);
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kMeta;
  MetaRemoval r = sample_removal(s.clients[0], 0, 8);
  request.removals.push_back(r);
  // construct the retained graphs the same way the oracle must
  const Graph retained0 = apply_meta_removal(s.clients[0], r);
  std::set<int> forgotten;
  for (int v : r.removed_nodes) forgotten.insert(s.clients[0].origin_of(v));
  for (int v : retained0.masks.train)
    EXPECT_FALSE(forgotten.count(retained0.origin_of(v)));
  // oracle runs clean through
  const ModelParams theta_star =
      retrain_oracle(s.clients, request, Backbone::kGcn, 16, 22, s.state.config);
  EXPECT_TRUE(theta_star.all_finite());
}

TEST(RetrainOracle, ClientRequestDropsClient) {
  Harness s = trained_setup(23, 4);
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kClient;
  request.departing_clients = {0};
  const ModelParams theta_star =
      retrain_oracle(s.clients, request, Backbone::kGcn, 16, 24, s.state.config);
  // independent rebuild over clients 1..3
  std::vector<Graph> retained(s.clients.begin() + 1, s.clients.end());
  auto state = make_federation(retained, Backbone::kGcn, 16, 24, s.state.config);
  run_training(state, s.state.config.rounds);
  EXPECT_TRUE(bitwise_equal(theta_star, state.global));
}

}  // namespace
}  // namespace fgu

#include "fgu/gnn.hpp"

#include <gtest/gtest.h>

#include <numeric>

#include "fgu/rng.hpp"
#include "fgu/sbm.hpp"
#include "test_util.hpp"

namespace fgu {
namespace {

using testutil::close_rel;
using testutil::path_graph;

Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Random dense instance for gradient checks. Resampled until every GCN
// pre-activation is clear of the ReLU kink so finite differences stay valid.
struct DenseInstance {
  ModelParams params;
  Mat x;
  Mat a;
  std::vector<int> labels;
};

DenseInstance make_instance(Backbone backbone, std::uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int n = 3 + rng.uniform_int(0, 6);        // 3..8 nodes
    const int d_in = 2 + rng.uniform_int(0, 4);     // 2..5
    const int hidden = 2 + rng.uniform_int(0, 3);   // 2..4
    const int classes = 2 + rng.uniform_int(0, 3);  // 2..4
    DenseInstance inst;
    inst.params = init_params(backbone, d_in, hidden, classes,
                              rng.next_u64(), 2);
    inst.x = random_mat(n, d_in, rng);
    Mat raw = random_mat(n, n, rng, 0.3);
    inst.a = ((raw + Mat(raw.transpose())) * 0.5).array().abs().matrix();
    inst.a.diagonal().setZero();
    inst.labels.resize(n);
    for (int v = 0; v < n; ++v) inst.labels[v] = rng.uniform_int(0, classes);
    if (backbone == Backbone::kSgc) return inst;
    const auto prop = Propagator::from_dense(inst.a);
    const auto fp = run_forward(inst.params, prop, inst.x);
    if (fp.z1.array().abs().minCoeff() > 1e-3) return inst;
  }
  throw std::runtime_error("could not sample a kink-free instance");
}

std::vector<int> all_nodes(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

LossSpec make_loss(int which, const DenseInstance& inst, Rng& rng) {
  const int n = static_cast<int>(inst.x.rows());
  const int c = inst.params.num_classes();
  switch (which % 4) {
    case 0:
      return CeHardLoss{all_nodes(n), inst.labels};
    case 1: {
      Mat targets = random_mat(n, c, rng).array().abs().matrix();
      for (int i = 0; i < n; ++i) targets.row(i) /= targets.row(i).sum();
      return KlSoftLoss{all_nodes(n), targets};
    }
    case 2:
      return MseLogitsLoss{random_mat(n, c, rng)};
    default: {
      PrototypeLossSpec spec;
      const int dim = embedding_dim(inst.params);
      std::vector<int> group_a, group_b;
      for (int v = 0; v < n; ++v) (v % 2 ? group_a : group_b).push_back(v);
      Vec ta(dim), tb(dim);
      for (int k = 0; k < dim; ++k) {
        ta[k] = rng.normal();
        tb[k] = rng.normal();
      }
      spec.class_groups.push_back({group_a, ta});
      spec.class_groups.push_back({group_b, tb});
      return spec;
    }
  }
}

void check_gradients(Backbone backbone, std::uint64_t seed, int loss_kind,
                     double rel_tol = 1e-6, double abs_floor = 1e-8) {
  DenseInstance inst = make_instance(backbone, seed);
  Rng rng(Rng::mix(seed, 17));
  const LossSpec spec = make_loss(loss_kind, inst, rng);

  auto objective = [&]() {
    const auto prop = Propagator::from_dense(inst.a);
    return backward(inst.params, prop, inst.x, spec, false).first;
  };

  const auto prop = Propagator::from_dense(inst.a);
  const auto [value, grads] = backward(inst.params, prop, inst.x, spec, true);
  ASSERT_TRUE(std::isfinite(value));
  ASSERT_TRUE(grads.all_finite());

  for (std::size_t t = 0; t < inst.params.tensors.size(); ++t) {
    Mat& w = inst.params.tensors[t].value;
    const Mat& gw = grads.param_grads[t].value;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double numeric = testutil::central_diff(w.data()[k], objective);
      EXPECT_TRUE(close_rel(gw.data()[k], numeric, rel_tol, abs_floor))
          << "param " << inst.params.tensors[t].name << "[" << k
          << "] analytic=" << gw.data()[k] << " numeric=" << numeric;
    }
  }
  ASSERT_TRUE(grads.feature_grad.has_value());
  for (Eigen::Index k = 0; k < inst.x.size(); ++k) {
    const double numeric = testutil::central_diff(inst.x.data()[k], objective);
    EXPECT_TRUE(close_rel(grads.feature_grad->data()[k], numeric, rel_tol, abs_floor))
        << "X[" << k << "] analytic=" << grads.feature_grad->data()[k]
        << " numeric=" << numeric;
  }
  ASSERT_TRUE(grads.adjacency_grad.has_value());
  for (Eigen::Index k = 0; k < inst.a.size(); ++k) {
    const double numeric = testutil::central_diff(inst.a.data()[k], objective);
    EXPECT_TRUE(close_rel(grads.adjacency_grad->data()[k], numeric, rel_tol, abs_floor))
        << "A[" << k << "] analytic=" << grads.adjacency_grad->data()[k]
        << " numeric=" << numeric;
  }
}

TEST(GnnGradients, GcnMatchesFiniteDifferences) {
  for (int i = 0; i < 6; ++i) check_gradients(Backbone::kGcn, 1000 + i, i);
}

TEST(GnnGradients, SgcMatchesFiniteDifferences) {
  for (int i = 0; i < 6; ++i) check_gradients(Backbone::kSgc, 2000 + i, i);
}

TEST(GnnForward, ZeroWeightsGiveZeroLogits) {
  const Graph g = path_graph(5);
  ModelParams p = init_params(Backbone::kGcn, g.feature_dim(), 4, 2, 3);
  for (auto& t : p.tensors) t.value.setZero();
  EXPECT_DOUBLE_EQ(forward(p, g).norm(), 0.0);
}

TEST(GnnForward, HandComputedTwoNodeGcn) {
  // Graph: 0-1, features x0=[1], x1=[2]; w1=[[1]], w2=[[1]].
  // deg+self: 2 and 2, s = 1/sqrt(2); a_hat = [[1/2, 1/2], [1/2, 1/2]].
  // px = a_hat*x = [1.5, 1.5]; z1 = px (w1=1); h = relu = [1.5, 1.5];
  // ph = a_hat*h = [1.5, 1.5]; logits = ph (w2=1).
  Graph g;
  g.num_nodes = 2;
  g.num_classes = 1;
  g.features.resize(2, 1);
  g.features << 1.0, 2.0;
  g.labels = {0, 0};
  g.edges = {{0, 1}};
  g.validate();
  ModelParams p;
  p.backbone = Backbone::kGcn;
  p.tensors.push_back({"w1", Mat::Ones(1, 1)});
  p.tensors.push_back({"w2", Mat::Ones(1, 1)});
  const Mat logits = forward(p, g);
  EXPECT_NEAR(logits(0, 0), 1.5, 1e-12);
  EXPECT_NEAR(logits(1, 0), 1.5, 1e-12);
}

TEST(GnnForward, DenseBinaryMatchesSparse) {
  const Graph g = path_graph(7, 3, 4);
  Rng rng(5);
  Graph gg = g;
  gg.features = random_mat(7, 4, rng);
  for (const Backbone backbone : {Backbone::kGcn, Backbone::kSgc}) {
    const ModelParams p = init_params(backbone, 4, 5, 3, 11);
    Mat dense = Mat::Zero(7, 7);
    for (const auto& [u, v] : gg.edges) dense(u, v) = dense(v, u) = 1.0;
    const Mat sparse_logits = forward(p, gg);
    const Mat dense_logits = forward(p, gg.features, dense);
    EXPECT_LT((sparse_logits - dense_logits).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GnnForward, PermutationEquivariant) {
  const int n = 9;
  Rng rng(8);
  Graph g = path_graph(n, 3, 4);
  g.edges.emplace_back(0, 5);
  g.edges.emplace_back(2, 7);
  g.normalize_edges();
  g.features = random_mat(n, 4, rng);
  // permutation: rotate ids by 3
  std::vector<int> perm(n);
  for (int v = 0; v < n; ++v) perm[v] = (v + 3) % n;
  Graph pg = g;
  pg.features.setZero();
  for (int v = 0; v < n; ++v) pg.features.row(perm[v]) = g.features.row(v);
  for (int v = 0; v < n; ++v) pg.labels[perm[v]] = g.labels[v];
  pg.edges.clear();
  for (const auto& [u, v] : g.edges) pg.edges.push_back(make_edge(perm[u], perm[v]));
  pg.normalize_edges();
  for (const Backbone backbone : {Backbone::kGcn, Backbone::kSgc}) {
    const ModelParams p = init_params(backbone, 4, 5, 3, 21);
    const Mat base = forward(p, g);
    const Mat permuted = forward(p, pg);
    for (int v = 0; v < n; ++v)
      EXPECT_LT((permuted.row(perm[v]) - base.row(v)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GnnInit, DeterministicAndShaped) {
  const ModelParams a = init_params(Backbone::kGcn, 1433, 64, 7, 99);
  const ModelParams b = init_params(Backbone::kGcn, 1433, 64, 7, 99);
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_EQ(a.tensor("w1").rows(), 1433);
  EXPECT_EQ(a.tensor("w1").cols(), 64);
  EXPECT_EQ(a.tensor("w2").rows(), 64);
  EXPECT_EQ(a.tensor("w2").cols(), 7);
  const ModelParams c = init_params(Backbone::kGcn, 1433, 64, 7, 100);
  EXPECT_FALSE(bitwise_equal(a, c));
}

TEST(GnnInit, RejectsBadShapes) {
  EXPECT_THROW(init_params(Backbone::kGcn, 10, 0, 3, 1), std::invalid_argument);
  EXPECT_THROW(init_params(Backbone::kGcn, 0, 4, 3, 1), std::invalid_argument);
  EXPECT_THROW(init_params(Backbone::kSgc, 10, 0, 3, 1, 0), std::invalid_argument);
}

TEST(GnnLoss, MseAgainstOwnLogitsIsZeroGradient) {
  const Graph g = path_graph(5, 2, 3);
  const ModelParams p = init_params(Backbone::kGcn, 3, 4, 2, 6);
  const Mat logits = forward(p, g);
  const auto prop = Propagator::from_graph(g);
  const auto [value, grads] =
      backward(p, prop, g.features, MseLogitsLoss{logits}, false);
  EXPECT_NEAR(value, 0.0, 1e-15);
  for (const auto& t : grads.param_grads)
    EXPECT_NEAR(t.value.cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(GnnLoss, DoublingLossScalesGradientsExactly) {
  const Graph g = path_graph(6, 2, 3);
  const ModelParams p = init_params(Backbone::kGcn, 3, 4, 2, 6);
  const auto prop = Propagator::from_graph(g);
  const LossSpec spec = CeHardLoss{g.masks.train, g.labels};
  const auto fp = run_forward(p, prop, g.features);
  const auto lg = cross_entropy_hard(fp.logits, g.labels, g.masks.train);
  const auto g1 = backward_logits(fp, lg.dlogits, false);
  const auto g2 = backward_logits(fp, Mat(2.0 * lg.dlogits), false);
  for (std::size_t i = 0; i < g1.param_grads.size(); ++i) {
    const Mat expected = 2.0 * g1.param_grads[i].value;
    EXPECT_EQ((expected - g2.param_grads[i].value).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Optim, ZeroGradientLeavesParamsUntouched) {
  ModelParams p = init_params(Backbone::kGcn, 4, 3, 2, 1);
  GradBundle zeros;
  for (const auto& t : p.tensors)
    zeros.param_grads.push_back({t.name, Mat::Zero(t.value.rows(), t.value.cols())});
  AdamState adam = AdamState::like(p);
  const ModelParams after_adam = adam_step(p, zeros, 0.1, adam);
  EXPECT_TRUE(bitwise_equal(p, after_adam));
  const ModelParams after_sgd = sgd_step(p, zeros, 0.1);
  EXPECT_TRUE(bitwise_equal(p, after_sgd));
}

TEST(Optim, SgdWithUnitRateAndSelfGradZeroesParams) {
  ModelParams p = init_params(Backbone::kSgc, 4, 0, 3, 2);
  GradBundle grads;
  for (const auto& t : p.tensors) grads.param_grads.push_back({t.name, t.value});
  const ModelParams out = sgd_step(p, grads, 1.0);
  for (const auto& t : out.tensors)
    EXPECT_DOUBLE_EQ(t.value.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Optim, AdamFirstStepMagnitudeIsLearningRate) {
  // First Adam step: m_hat = g, v_hat = g^2, update = lr*g/(|g|+eps) ~ lr*sign(g).
  ModelParams p = init_params(Backbone::kGcn, 3, 3, 2, 4);
  Rng rng(12);
  GradBundle grads;
  for (const auto& t : p.tensors)
    grads.param_grads.push_back(
        {t.name, random_mat(static_cast<int>(t.value.rows()),
                            static_cast<int>(t.value.cols()), rng)});
  AdamState adam = AdamState::like(p);
  const double lr = 0.05;
  const ModelParams out = adam_step(p, grads, lr, adam);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const Mat delta = out.tensors[i].value - p.tensors[i].value;
    for (Eigen::Index k = 0; k < delta.size(); ++k) {
      const double g = grads.param_grads[i].value.data()[k];
      if (std::abs(g) > 1e-3)
        EXPECT_NEAR(std::abs(delta.data()[k]), lr, lr * 1e-4);
    }
  }
}

TEST(TrainLocal, ZeroEpochsKeepsParams) {
  const Graph g = path_graph(6, 2, 3);
  const ModelParams p = init_params(Backbone::kGcn, 3, 4, 2, 5);
  const ModelParams out = train_local(p, g, {.epochs = 0});
  EXPECT_TRUE(bitwise_equal(p, out));
}

TEST(TrainLocal, EmptyTrainMaskThrows) {
  Graph g = path_graph(6, 2, 3);
  g.masks.train.clear();
  const ModelParams p = init_params(Backbone::kGcn, 3, 4, 2, 5);
  EXPECT_THROW(train_local(p, g, {.epochs = 1}), std::invalid_argument);
}

TEST(TrainLocal, SeparableSbmReachesHighTrainAccuracy) {
  SbmConfig cfg;
  cfg.blocks = {{50, 0}, {50, 1}};
  cfg.p_in = 0.2;
  cfg.p_out = 0.01;
  cfg.feature_dim = 8;
  const Graph g = sbm_generate(cfg, 31);
  ModelParams p = init_params(Backbone::kGcn, 8, 16, 2, 7);
  p = train_local(p, g, {.epochs = 50, .lr = 0.05});
  const Mat logits = forward(p, g);
  int correct = 0;
  for (int v : g.masks.train) {
    Eigen::Index pred;
    logits.row(v).maxCoeff(&pred);
    if (static_cast<int>(pred) == g.labels[v]) ++correct;
  }
  EXPECT_GE(static_cast<double>(correct) / g.masks.train.size(), 0.95);
}

TEST(TrainLocal, LossDescendsMonotonically) {
  SbmConfig cfg;
  cfg.blocks = {{60, 0}, {60, 1}, {60, 2}};
  cfg.p_in = 0.15;
  cfg.p_out = 0.01;
  cfg.feature_dim = 8;
  const Graph g = sbm_generate(cfg, 77);
  std::vector<double> losses;
  TrainOptions opts;
  opts.epochs = 25;
  opts.lr = 1e-3;
  opts.loss_log = &losses;
  train_local(init_params(Backbone::kGcn, 8, 16, 3, 3), g, opts);
  ASSERT_EQ(losses.size(), 25u);
  for (std::size_t e = 1; e < losses.size(); ++e)
    EXPECT_LE(losses[e], losses[e - 1] + 1e-3);
}

TEST(TrainLocal, DeterministicPerSeed) {
  const Graph g = testutil::two_cliques(8);
  const ModelParams init = init_params(Backbone::kGcn, g.feature_dim(), 8, 2, 9);
  const ModelParams a = train_local(init, g, {.epochs = 10, .lr = 1e-2});
  const ModelParams b = train_local(init, g, {.epochs = 10, .lr = 1e-2});
  EXPECT_TRUE(bitwise_equal(a, b));
}

}  // namespace
}  // namespace fgu

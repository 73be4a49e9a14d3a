#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fgu/gnn.hpp"
#include "fgu/graph.hpp"
#include "fgu/model.hpp"
#include "fgu/optim.hpp"
#include "fgu/rng.hpp"

namespace fgu {

struct AdvConfig {
  int nodes = 64;
  double lambda = 0.1;   // sparsity weight
  double eps_x = 0.1;    // feature box radius
  int k_flip = 5;        // hard edge-flip budget
  int max_iters = 200;
  double tol = 1e-4;     // plateau tolerance on the objective
  int patience = 10;     // consecutive small improvements before stopping
  double lr = 0.01;
  std::uint64_t seed = 0;
  bool raw_ce = false;          // cross-entropy objective instead of KL
  bool topk_on_logits = false;  // rank flips by |A_var - A_init| instead

  void validate() const {
    if (nodes < 2) throw std::invalid_argument("adv: need at least two nodes");
    if (lambda < 0) throw std::invalid_argument("adv: lambda must be >= 0");
    if (eps_x <= 0) throw std::invalid_argument("adv: eps_x must be > 0");
    if (k_flip < 1 || k_flip > nodes * (nodes - 1) / 2)
      throw std::invalid_argument("adv: flip budget outside [1, N(N-1)/2]");
    if (max_iters < 0) throw std::invalid_argument("adv: negative iteration cap");
    if (lr <= 0) throw std::invalid_argument("adv: lr must be > 0");
  }
};

struct AdvVariables {
  Mat x_init, a_init;  // N x d features, N x N binary adjacency
  Mat x_var, a_var;    // optimization variables; a_var lives in logit space
  MatAdam adam_x, adam_a;
};

struct AdvLosses {
  double diff = 0.0;
  double reg = 0.0;
  double adv = 0.0;
};

namespace detail {

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Mat sigmoid(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < m.size(); ++k) out.data()[k] = sigmoid(m.data()[k]);
  return out;
}

// Relaxed symmetric adjacency from the logit variables, diagonal masked.
inline Mat relaxed_adjacency(const Mat& a_var) {
  Mat a_tilde = sigmoid(a_var);
  a_tilde.diagonal().setZero();
  return 0.5 * (a_tilde + Mat(a_tilde.transpose()));
}

// Clamp x into the eps-box around x_init, then nudge entries by ulps until
// the recomputed double-precision difference respects the bound exactly.
inline void box_project(Mat& x, const Mat& x_init, double eps) {
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double base = x_init.data()[k];
    double delta = x.data()[k] - base;
    if (delta > eps) delta = eps;
    if (delta < -eps) delta = -eps;
    double value = base + delta;
    while (value - base > eps) value = std::nextafter(value, base);
    while (value - base < -eps) value = std::nextafter(value, base);
    x.data()[k] = value;
  }
}

}  // namespace detail

// Random starting point: features uniform in [0,1), adjacency Bernoulli(0.1)
// symmetrized with an empty diagonal. The logit variables start at
// logit(clamp(A_init, 0.05, 0.95)) so sigma(A_var) tracks A_init.
inline AdvVariables init_adv(const AdvConfig& cfg, int feature_dim) {
  cfg.validate();
  if (feature_dim < 1) throw std::invalid_argument("init_adv: bad feature dim");
  Rng x_rng(Rng::mix(cfg.seed, 11));
  Rng a_rng(Rng::mix(cfg.seed, 12));
  const int n = cfg.nodes;

  AdvVariables vars{Mat(n, feature_dim), Mat::Zero(n, n), Mat(), Mat(),
                    MatAdam(n, feature_dim), MatAdam(n, n)};
  for (Eigen::Index k = 0; k < vars.x_init.size(); ++k)
    vars.x_init.data()[k] = x_rng.uniform();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double bit = a_rng.bernoulli(0.1) ? 1.0 : 0.0;
      vars.a_init(i, j) = vars.a_init(j, i) = bit;
    }
  }
  vars.x_var = vars.x_init;
  const double lo = std::log(0.05 / 0.95), hi = std::log(0.95 / 0.05);
  vars.a_var.resize(n, n);
  for (Eigen::Index k = 0; k < vars.a_var.size(); ++k)
    vars.a_var.data()[k] = vars.a_init.data()[k] > 0.5 ? hi : lo;
  return vars;
}

// Objective of Algorithm 1 at one point: L_adv = L_diff - lambda * L_reg,
// where L_diff measures the output discrepancy of the two models on the
// relaxed graph and L_reg is the L1 distance from the initial adjacency.
// Gradients flow through both model evaluations, so identical models give
// an exactly zero gradient under the KL form.
inline AdvLosses adv_objective(const ModelParams& original, const ModelParams& unlearned,
                               const Mat& x, const Mat& a_sym, const Mat& a_init,
                               const AdvConfig& cfg, Mat* dx = nullptr,
                               Mat* da_sym = nullptr) {
  const auto prop = Propagator::from_dense(a_sym);
  const auto fp_orig = run_forward(original, prop, x);
  const auto fp_unl = run_forward(unlearned, prop, x);
  const Mat logp_t = log_softmax_rows(fp_orig.logits);
  const Mat logp_s = log_softmax_rows(fp_unl.logits);
  const Mat probs_t = logp_t.array().exp().matrix();
  const Mat probs_s = logp_s.array().exp().matrix();
  const double n = static_cast<double>(x.rows());

  AdvLosses losses;
  losses.diff = cfg.raw_ce
                    ? -(probs_t.array() * logp_s.array()).sum() / n
                    : (probs_t.array() * (logp_t - logp_s).array()).sum() / n;
  losses.reg = (a_sym - a_init).cwiseAbs().sum();
  losses.adv = losses.diff - cfg.lambda * losses.reg;

  if (dx || da_sym) {
    const Mat d_student = (probs_s - probs_t) / n;
    const auto grads_s = backward_logits(fp_unl, d_student, true);
    const Mat d_teacher_probs =
        cfg.raw_ce ? Mat(-logp_s / n) : Mat((logp_t - logp_s) / n);
    const Mat d_teacher = softmax_backward(probs_t, d_teacher_probs);
    const auto grads_t = backward_logits(fp_orig, d_teacher, true);
    if (dx) *dx = *grads_s.feature_grad + *grads_t.feature_grad;
    if (da_sym) {
      *da_sym = *grads_s.adjacency_grad + *grads_t.adjacency_grad;
      // L1 subgradient of the sparsity term, sign(0) = 0.
      for (Eigen::Index k = 0; k < da_sym->size(); ++k) {
        const double d = a_sym.data()[k] - a_init.data()[k];
        da_sym->data()[k] -= cfg.lambda * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0);
      }
    }
  }
  return losses;
}

// One ascent step on (A_var, X_var), followed by the feature box projection.
// Returns the losses at the pre-step variables.
inline AdvLosses adv_step(const ModelParams& original, const ModelParams& unlearned,
                          AdvVariables& vars, const AdvConfig& cfg) {
  const Mat a_sym = detail::relaxed_adjacency(vars.a_var);
  Mat dx, da_sym;
  const AdvLosses losses = adv_objective(original, unlearned, vars.x_var, a_sym,
                                         vars.a_init, cfg, &dx, &da_sym);
  if (!std::isfinite(losses.adv))
    throw std::runtime_error("adv_step: non-finite objective");

  // Chain through the symmetrization and the sigmoid; diagonal stays frozen.
  const Mat da_tilde = 0.5 * (da_sym + Mat(da_sym.transpose()));
  const Mat sig = detail::sigmoid(vars.a_var);
  Mat da_var = (da_tilde.array() * sig.array() * (1.0 - sig.array())).matrix();
  da_var.diagonal().setZero();

  // Ascent: feed the optimizer the negated gradients.
  vars.a_var += vars.adam_a.update(-da_var, cfg.lr);
  vars.x_var += vars.adam_x.update(-dx, cfg.lr);
  detail::box_project(vars.x_var, vars.x_init, cfg.eps_x);
  return losses;
}

struct AdversarialGraph {
  int num_nodes = 0;
  Mat x_final;
  std::vector<Edge> edges;   // thresholded from a_final
  Mat a_final;
  Mat x_init, a_init;        // provenance
  AdvLosses initial_losses, final_losses;
  int iterations = 0;
  std::vector<Edge> flipped;  // upper-triangle positions that were hard-flipped

  // The probe as a plain graph: final features, thresholded edges, dummy
  // labels, empty masks.
  Graph as_graph(int num_classes = 1) const {
    Graph g;
    g.num_nodes = num_nodes;
    g.num_classes = std::max(1, num_classes);
    g.features = x_final;
    g.labels.assign(num_nodes, 0);
    g.edges = edges;
    g.validate();
    return g;
  }

  std::vector<int> all_nodes() const {
    std::vector<int> v(num_nodes);
    for (int i = 0; i < num_nodes; ++i) v[i] = i;
    return v;
  }
};

// Full Algorithm 1: ascend until the iteration cap or an improvement
// plateau, then hard-flip the top-K most-moved upper-triangle entries and
// threshold into the final edge set.
inline AdversarialGraph generate(const ModelParams& original,
                                 const ModelParams& unlearned, const AdvConfig& cfg) {
  cfg.validate();
  if (!original.same_layout(unlearned))
    throw std::invalid_argument("generate: model layouts differ");
  AdvVariables vars = init_adv(cfg, original.input_dim());

  AdversarialGraph out;
  out.num_nodes = cfg.nodes;
  out.x_init = vars.x_init;
  out.a_init = vars.a_init;
  out.initial_losses =
      adv_objective(original, unlearned, vars.x_var,
                    detail::relaxed_adjacency(vars.a_var), vars.a_init, cfg);

  double prev_adv = out.initial_losses.adv;
  int stall = 0;
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    adv_step(original, unlearned, vars, cfg);
    const AdvLosses now =
        adv_objective(original, unlearned, vars.x_var,
                      detail::relaxed_adjacency(vars.a_var), vars.a_init, cfg);
    stall = now.adv - prev_adv < cfg.tol ? stall + 1 : 0;
    prev_adv = now.adv;
    if (stall >= cfg.patience) {
      ++iter;
      break;
    }
  }
  out.iterations = iter;

  const Mat a_sym = detail::relaxed_adjacency(vars.a_var);
  out.final_losses =
      adv_objective(original, unlearned, vars.x_var, a_sym, vars.a_init, cfg);

  // Rank upper-triangle entries by how far they moved from the init; ties
  // break toward the lexicographically smallest (i, j).
  const Mat& rank_source = cfg.topk_on_logits ? vars.a_var : a_sym;
  std::vector<std::pair<double, Edge>> moves;
  for (int i = 0; i < cfg.nodes; ++i)
    for (int j = i + 1; j < cfg.nodes; ++j)
      moves.push_back({std::abs(rank_source(i, j) - vars.a_init(i, j)), {i, j}});
  std::sort(moves.begin(), moves.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  out.a_final = a_sym;
  for (int k = 0; k < cfg.k_flip; ++k) {
    const auto [i, j] = moves[k].second;
    const double flipped_value = 1.0 - vars.a_init(i, j);
    out.a_final(i, j) = out.a_final(j, i) = flipped_value;
    out.flipped.push_back({i, j});
  }
  std::sort(out.flipped.begin(), out.flipped.end());

  out.x_final = vars.x_var;
  detail::box_project(out.x_final, vars.x_init, cfg.eps_x);
  for (int i = 0; i < cfg.nodes; ++i)
    for (int j = i + 1; j < cfg.nodes; ++j)
      if (out.a_final(i, j) > 0.5) out.edges.emplace_back(i, j);
  return out;
}

}  // namespace fgu

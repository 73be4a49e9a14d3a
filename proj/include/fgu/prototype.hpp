#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgu/gnn.hpp"
#include "fgu/graph.hpp"
#include "fgu/model.hpp"
#include "fgu/optim.hpp"

namespace fgu {

enum class EmbeddingSpace { kHidden, kLogits };

// Per-class mean embeddings of one client; classes absent from the node
// subset are simply not present.
struct PrototypeSet {
  int client_id = -1;
  int dim = 0;
  std::map<int, Vec> by_class;

  bool has_class(int c) const { return by_class.count(c) > 0; }
};

inline PrototypeSet compute_prototypes(const ModelParams& params, const Graph& g,
                                       const std::vector<int>& nodes,
                                       EmbeddingSpace space = EmbeddingSpace::kHidden,
                                       int client_id = -1) {
  if (nodes.empty())
    throw std::invalid_argument("compute_prototypes: empty node subset");
  const auto prop = Propagator::from_graph(g);
  const auto fp = run_forward(params, prop, g.features);
  const Mat& rep = space == EmbeddingSpace::kHidden ? hidden_embedding(fp) : fp.logits;

  PrototypeSet out;
  out.client_id = client_id;
  out.dim = static_cast<int>(rep.cols());
  std::map<int, int> counts;
  for (int v : nodes) {
    if (v < 0 || v >= g.num_nodes)
      throw std::invalid_argument("compute_prototypes: node " + std::to_string(v) +
                                  " out of range");
    const int c = g.labels[v];
    auto [it, inserted] = out.by_class.try_emplace(c, Vec::Zero(rep.cols()));
    it->second += rep.row(v).transpose();
    ++counts[c];
  }
  for (auto& [c, vec] : out.by_class) vec /= static_cast<double>(counts[c]);
  return out;
}

// Orthonormal basis of the span of the retained prototypes, columns in
// insertion order.
struct OrthonormalBasis {
  Mat v;  // dim x size

  int dim() const { return static_cast<int>(v.rows()); }
  int size() const { return static_cast<int>(v.cols()); }
};

// Classical Gram-Schmidt in input order with a second orthogonalization
// sweep per vector; residuals below the drop tolerance are discarded as
// linearly dependent.
inline OrthonormalBasis gram_schmidt(const std::vector<Vec>& vectors,
                                     double drop_tol = 1e-8) {
  if (vectors.empty())
    throw std::invalid_argument("gram_schmidt: no input vectors");
  const Eigen::Index dim = vectors.front().size();
  std::vector<Vec> basis;
  for (const auto& input : vectors) {
    if (input.size() != dim)
      throw std::invalid_argument("gram_schmidt: inconsistent dimensions");
    if (!input.allFinite())
      throw std::invalid_argument("gram_schmidt: non-finite input vector");
    Vec v = input;
    for (int sweep = 0; sweep < 2; ++sweep)
      for (const auto& b : basis) v -= b.dot(v) * b;
    const double norm = v.norm();
    if (norm < drop_tol) continue;  // dependent on the span so far
    basis.push_back(v / norm);
    if (static_cast<Eigen::Index>(basis.size()) == dim) break;
  }
  if (basis.empty())
    throw std::invalid_argument("gram_schmidt: all inputs degenerate, empty basis");
  OrthonormalBasis out;
  out.v.resize(dim, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) out.v.col(i) = basis[i];
  return out;
}

// Orthogonal decomposition of the unlearn prototype against the retained
// span: p_com = V V^T p_del is the common part, p_priv = p_com - p_del the
// private direction that guides local unlearning.
struct PrivateDirection {
  struct Component {
    Vec p_del, p_com, p_priv;
  };
  int dim = 0;
  int basis_size = 0;
  std::map<int, Component> by_class;
};

inline PrivateDirection project_private(const PrototypeSet& p_del,
                                        const OrthonormalBasis& basis) {
  if (p_del.dim != basis.dim())
    throw std::invalid_argument("project_private: dimension mismatch (" +
                                std::to_string(p_del.dim) + " vs " +
                                std::to_string(basis.dim()) + ")");
  PrivateDirection out;
  out.dim = p_del.dim;
  out.basis_size = basis.size();
  for (const auto& [c, del] : p_del.by_class) {
    PrivateDirection::Component comp;
    comp.p_del = del;
    comp.p_com = basis.v * (basis.v.transpose() * del);
    comp.p_priv = comp.p_com - comp.p_del;
    out.by_class.emplace(c, std::move(comp));
  }
  return out;
}

struct UnlearnOptions {
  int epochs = 1;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  EmbeddingSpace space = EmbeddingSpace::kHidden;
  std::vector<double>* loss_log = nullptr;
};

// Local unlearn: fine-tune so the recomputed unlearn prototypes move toward
// the frozen private directions. The targets stay fixed at their values from
// projection time; only p_del(theta) is live.
inline ModelParams local_unlearn(ModelParams params, const Graph& g,
                                 const MetaRemoval& removal,
                                 const PrivateDirection& direction,
                                 const UnlearnOptions& opts) {
  if (removal.empty())
    throw std::invalid_argument("local_unlearn: empty removal");
  const std::vector<int> scope = removal_node_scope(g, removal);

  PrototypeLossSpec spec;
  spec.logit_space = opts.space == EmbeddingSpace::kLogits;
  std::map<int, std::vector<int>> groups;
  for (int v : scope) groups[g.labels[v]].push_back(v);
  for (const auto& [c, nodes] : groups) {
    const auto it = direction.by_class.find(c);
    if (it == direction.by_class.end())
      throw std::invalid_argument("local_unlearn: direction missing class " +
                                  std::to_string(c));
    spec.class_groups.push_back({nodes, it->second.p_priv});
  }

  const auto prop = Propagator::from_graph(g);
  AdamState adam = AdamState::like(params);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    auto [loss, grads] = backward(params, prop, g.features, LossSpec{spec}, false);
    if (!std::isfinite(loss))
      throw std::runtime_error("local_unlearn: non-finite loss at epoch " +
                               std::to_string(epoch));
    if (opts.loss_log) opts.loss_log->push_back(loss);
    params = opts.optimizer == Optimizer::kAdam
                 ? adam_step(std::move(params), grads, opts.lr, adam)
                 : sgd_step(std::move(params), grads, opts.lr);
  }
  if (!params.all_finite())
    throw std::runtime_error("local_unlearn: non-finite parameters after update");
  return params;
}

inline double cosine_similarity(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

// Influenced-client selection: client j is influenced when any class both
// clients hold has prototype cosine similarity >= tau with the unlearning
// client's prototype.
inline std::vector<int> select_influenced(const std::vector<PrototypeSet>& prototypes,
                                          int unlearn_client, double tau) {
  const PrototypeSet* target = nullptr;
  for (const auto& p : prototypes)
    if (p.client_id == unlearn_client) target = &p;
  if (!target)
    throw std::invalid_argument("select_influenced: no prototypes for client " +
                                std::to_string(unlearn_client));
  std::vector<int> out;
  for (const auto& p : prototypes) {
    if (p.client_id == unlearn_client) continue;
    double best = -2.0;
    for (const auto& [c, vec] : p.by_class) {
      const auto it = target->by_class.find(c);
      if (it == target->by_class.end()) continue;
      best = std::max(best, cosine_similarity(vec, it->second));
    }
    if (best >= tau) out.push_back(p.client_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fgu

#pragma once

#include <Eigen/Sparse>

#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fgu/graph.hpp"
#include "fgu/model.hpp"
#include "fgu/optim.hpp"

namespace fgu {

// Symmetric-normalized propagation operator D^{-1/2}(A + I)D^{-1/2}.
// Sparse over a Graph for training, dense over an arbitrary real adjacency
// for the relaxed adversarial inputs; only the dense form supports
// gradients with respect to the adjacency.
class Propagator {
 public:
  static Propagator from_graph(const Graph& g) {
    Propagator p;
    p.n_ = g.num_nodes;
    const Csr csr = Csr::build(g);
    Vec s(g.num_nodes);
    for (int v = 0; v < g.num_nodes; ++v)
      s[v] = 1.0 / std::sqrt(1.0 + csr.degree(v));
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(2 * g.edges.size() + g.num_nodes);
    for (int v = 0; v < g.num_nodes; ++v) trips.emplace_back(v, v, s[v] * s[v]);
    for (const auto& [u, v] : g.edges) {
      trips.emplace_back(u, v, s[u] * s[v]);
      trips.emplace_back(v, u, s[u] * s[v]);
    }
    p.sparse_.resize(g.num_nodes, g.num_nodes);
    p.sparse_.setFromTriplets(trips.begin(), trips.end());
    return p;
  }

  static Propagator from_dense(const Mat& adjacency) {
    if (adjacency.rows() != adjacency.cols())
      throw std::invalid_argument("propagator: adjacency must be square");
    Propagator p;
    p.dense_ = true;
    p.n_ = static_cast<int>(adjacency.rows());
    p.m_ = adjacency;
    p.m_.diagonal().array() += 1.0;
    p.deg_ = p.m_.rowwise().sum();
    if ((p.deg_.array() <= 0.0).any())
      throw std::invalid_argument("propagator: non-positive augmented degree");
    p.s_ = p.deg_.array().pow(-0.5).matrix();
    p.a_hat_ = p.s_.asDiagonal() * p.m_ * p.s_.asDiagonal();
    return p;
  }

  int size() const { return n_; }
  bool is_dense() const { return dense_; }

  Mat apply(const Mat& y) const {
    if (dense_) return a_hat_ * y;
    return sparse_ * y;
  }

  Mat apply_transpose(const Mat& y) const {
    // The sparse operator is symmetric by construction.
    if (dense_) return a_hat_.transpose() * y;
    return sparse_ * y;
  }

  // Gradient with respect to the raw dense adjacency, given the gradient
  // with respect to the normalized operator. The degree chain contributes
  // a per-row correction: with M = A + I, d = row sums of M, s = d^{-1/2},
  //   dL/dA_pq = s_p s_q G_pq - (1/2) d_p^{-3/2} [ (G.M) s + (G.M)^T s ]_p.
  Mat adjacency_grad(const Mat& ahat_grad) const {
    if (!dense_)
      throw std::logic_error("propagator: adjacency gradients need a dense input");
    const Mat t = ahat_grad.cwiseProduct(m_);
    const Vec r = t * s_ + t.transpose() * s_;
    Mat grad = (s_ * s_.transpose()).cwiseProduct(ahat_grad);
    const Vec correction = (0.5 * deg_.array().pow(-1.5) * r.array()).matrix();
    grad.colwise() -= correction;
    return grad;
  }

 private:
  bool dense_ = false;
  int n_ = 0;
  Eigen::SparseMatrix<double> sparse_;
  Mat m_;     // A + I (dense only)
  Vec deg_, s_;
  Mat a_hat_;
};

// One forward evaluation with the intermediates a single backward needs.
struct ForwardPass {
  const ModelParams* params = nullptr;
  const Propagator* prop = nullptr;
  Mat x;
  // GCN intermediates
  Mat px, z1, h, ph;
  // SGC propagated powers T_0 .. T_k
  std::vector<Mat> t_pow;
  Mat logits;
};

inline ForwardPass run_forward(const ModelParams& params, const Propagator& prop,
                               const Mat& features) {
  if (features.cols() != params.input_dim())
    throw std::invalid_argument("forward: feature dim " +
                                std::to_string(features.cols()) +
                                " != model input dim " +
                                std::to_string(params.input_dim()));
  if (features.rows() != prop.size())
    throw std::invalid_argument("forward: feature rows != adjacency size");
  ForwardPass fp;
  fp.params = &params;
  fp.prop = &prop;
  fp.x = features;
  if (params.backbone == Backbone::kGcn) {
    fp.px = prop.apply(features);
    fp.z1 = fp.px * params.tensor("w1");
    fp.h = fp.z1.cwiseMax(0.0);
    fp.ph = prop.apply(fp.h);
    fp.logits = fp.ph * params.tensor("w2");
  } else {
    fp.t_pow.resize(params.propagation_depth + 1);
    fp.t_pow[0] = features;
    for (int j = 1; j <= params.propagation_depth; ++j)
      fp.t_pow[j] = prop.apply(fp.t_pow[j - 1]);
    fp.logits = fp.t_pow.back() * params.tensor("w");
  }
  return fp;
}

inline Mat forward(const ModelParams& params, const Graph& g) {
  const auto prop = Propagator::from_graph(g);
  return run_forward(params, prop, g.features).logits;
}

inline Mat forward(const ModelParams& params, const Mat& features, const Mat& adjacency) {
  const auto prop = Propagator::from_dense(adjacency);
  return run_forward(params, prop, features).logits;
}

// Representation used for prototypes: GCN layer-1 post-activation output,
// SGC propagated features.
inline const Mat& hidden_embedding(const ForwardPass& fp) {
  return fp.params->backbone == Backbone::kGcn ? fp.h : fp.t_pow.back();
}

inline int embedding_dim(const ModelParams& params) {
  return params.backbone == Backbone::kGcn ? params.hidden_dim() : params.input_dim();
}

// Reverse pass from d(loss)/d(logits). Exact reverse-mode derivatives of
// the forward composition, including the adjacency normalization chain
// when the propagator is dense and input gradients were requested.
inline GradBundle backward_logits(const ForwardPass& fp, const Mat& dlogits,
                                  bool need_input_grads) {
  const ModelParams& p = *fp.params;
  const Propagator& prop = *fp.prop;
  GradBundle out;
  if (p.backbone == Backbone::kGcn) {
    const Mat& w1 = p.tensor("w1");
    const Mat& w2 = p.tensor("w2");
    const Mat grad_w2 = fp.ph.transpose() * dlogits;
    const Mat dph = dlogits * w2.transpose();
    const Mat dh = prop.apply_transpose(dph);
    const Mat dz1 = ((fp.z1.array() > 0.0).cast<double>() * dh.array()).matrix();
    const Mat grad_w1 = fp.px.transpose() * dz1;
    out.param_grads.push_back({"w1", grad_w1});
    out.param_grads.push_back({"w2", grad_w2});
    if (need_input_grads) {
      const Mat dpx = dz1 * w1.transpose();
      out.feature_grad = prop.apply_transpose(dpx);
      if (prop.is_dense()) {
        const Mat dahat = dph * fp.h.transpose() + dpx * fp.x.transpose();
        out.adjacency_grad = prop.adjacency_grad(dahat);
      }
    }
  } else {
    const Mat& w = p.tensor("w");
    out.param_grads.push_back({"w", fp.t_pow.back().transpose() * dlogits});
    if (need_input_grads) {
      Mat dt = dlogits * w.transpose();  // d/dT_k
      Mat dahat = Mat::Zero(prop.size(), prop.size());
      for (int j = p.propagation_depth; j >= 1; --j) {
        if (prop.is_dense()) dahat += dt * fp.t_pow[j - 1].transpose();
        dt = prop.apply_transpose(dt);
      }
      out.feature_grad = dt;
      if (prop.is_dense()) out.adjacency_grad = prop.adjacency_grad(dahat);
    }
  }
  return out;
}

// Reverse pass from d(loss)/d(embedding). For SGC the embedding does not
// depend on the weights, so parameter gradients are zero by construction.
inline GradBundle backward_hidden(const ForwardPass& fp, const Mat& dhidden,
                                  bool need_input_grads = false) {
  const ModelParams& p = *fp.params;
  const Propagator& prop = *fp.prop;
  GradBundle out;
  if (p.backbone == Backbone::kGcn) {
    const Mat& w1 = p.tensor("w1");
    const Mat dz1 = ((fp.z1.array() > 0.0).cast<double>() * dhidden.array()).matrix();
    out.param_grads.push_back({"w1", fp.px.transpose() * dz1});
    out.param_grads.push_back(
        {"w2", Mat::Zero(p.tensor("w2").rows(), p.tensor("w2").cols())});
    if (need_input_grads) {
      const Mat dpx = dz1 * w1.transpose();
      out.feature_grad = prop.apply_transpose(dpx);
      if (prop.is_dense())
        out.adjacency_grad = prop.adjacency_grad(dpx * fp.x.transpose());
    }
  } else {
    out.param_grads.push_back(
        {"w", Mat::Zero(p.tensor("w").rows(), p.tensor("w").cols())});
    if (need_input_grads) {
      Mat dt = dhidden;
      Mat dahat = Mat::Zero(prop.size(), prop.size());
      for (int j = p.propagation_depth; j >= 1; --j) {
        if (prop.is_dense()) dahat += dt * fp.t_pow[j - 1].transpose();
        dt = prop.apply_transpose(dt);
      }
      out.feature_grad = dt;
      if (prop.is_dense()) out.adjacency_grad = prop.adjacency_grad(dahat);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss heads: each produces the loss value and d(loss)/d(logits).

inline Mat log_softmax_rows(const Mat& logits) {
  Mat out = logits;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.row(i).array() -= lse;
  }
  return out;
}

inline Mat softmax_rows(const Mat& logits) {
  return log_softmax_rows(logits).array().exp().matrix();
}

// Jacobian-vector product of row-wise softmax: given probabilities P and
// dL/dP, returns dL/dz. Row-constant shifts in dprobs cancel out.
inline Mat softmax_backward(const Mat& probs, const Mat& dprobs) {
  const Vec inner = (probs.array() * dprobs.array()).rowwise().sum().matrix();
  Mat dz = dprobs;
  dz.colwise() -= inner;
  return probs.cwiseProduct(dz);
}

struct LossGrad {
  double value = 0.0;
  Mat dlogits;
};

// Mean cross-entropy against hard labels over the listed nodes.
inline LossGrad cross_entropy_hard(const Mat& logits, const std::vector<int>& labels,
                                   const std::vector<int>& nodes) {
  if (nodes.empty()) throw std::invalid_argument("cross_entropy_hard: empty node set");
  const Mat logp = log_softmax_rows(logits);
  // Whole-matrix exp keeps probabilities bitwise consistent with
  // softmax_rows (Eigen vectorizes full-matrix exp differently from row
  // expressions).
  const Mat probs = logp.array().exp().matrix();
  LossGrad out;
  out.dlogits = Mat::Zero(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(nodes.size());
  for (int v : nodes) {
    out.value -= inv * logp(v, labels[v]);
    out.dlogits.row(v) = inv * probs.row(v);
    out.dlogits(v, labels[v]) -= inv;
  }
  return out;
}

// Mean KL(target || softmax(logits)) over the listed nodes; target rows are
// probability vectors aligned with the logits rows.
inline LossGrad kl_soft(const Mat& logits, const Mat& target_probs,
                        const std::vector<int>& nodes) {
  if (nodes.empty()) throw std::invalid_argument("kl_soft: empty node set");
  if (target_probs.rows() != logits.rows() || target_probs.cols() != logits.cols())
    throw std::invalid_argument("kl_soft: target shape mismatch");
  const Mat logp = log_softmax_rows(logits);
  const Mat probs = logp.array().exp().matrix();
  LossGrad out;
  out.dlogits = Mat::Zero(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(nodes.size());
  for (int v : nodes) {
    double row = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double t = target_probs(v, c);
      if (t > 0.0) row += t * (std::log(t) - logp(v, c));
    }
    out.value += inv * row;
    out.dlogits.row(v) = inv * (probs.row(v) - target_probs.row(v));
  }
  return out;
}

// Mean squared error against target logits over every entry.
inline LossGrad mse_vs_logits(const Mat& logits, const Mat& target_logits) {
  if (target_logits.rows() != logits.rows() || target_logits.cols() != logits.cols())
    throw std::invalid_argument("mse_vs_logits: target shape mismatch");
  const Mat diff = logits - target_logits;
  const double inv = 1.0 / static_cast<double>(logits.size());
  LossGrad out;
  out.value = inv * diff.squaredNorm();
  out.dlogits = 2.0 * inv * diff;
  return out;
}

// Prototype alignment objective: sum over classes of the mean-embedding
// distance to a frozen target, each normalized by the embedding dimension.
struct PrototypeLossSpec {
  // (nodes of one class, frozen target vector), both in graph-local ids.
  std::vector<std::pair<std::vector<int>, Vec>> class_groups;
  bool logit_space = false;
};

struct EmbeddingLoss {
  double value = 0.0;
  Mat dembedding;
};

inline EmbeddingLoss prototype_alignment_loss(const Mat& embedding,
                                              const PrototypeLossSpec& spec) {
  EmbeddingLoss out;
  out.dembedding = Mat::Zero(embedding.rows(), embedding.cols());
  const double dim = static_cast<double>(embedding.cols());
  for (const auto& [nodes, target] : spec.class_groups) {
    if (nodes.empty()) throw std::invalid_argument("prototype loss: empty class group");
    if (target.size() != embedding.cols())
      throw std::invalid_argument("prototype loss: target dimension mismatch");
    Vec mean = Vec::Zero(embedding.cols());
    for (int v : nodes) mean += embedding.row(v).transpose();
    mean /= static_cast<double>(nodes.size());
    const Vec diff = mean - target;
    out.value += diff.squaredNorm() / dim;
    const Vec dmean = 2.0 / dim * diff;
    for (int v : nodes)
      out.dembedding.row(v) += dmean.transpose() / static_cast<double>(nodes.size());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-call reverse mode over a declared objective.

struct CeHardLoss {
  std::vector<int> nodes;
  std::vector<int> labels;  // indexed by graph node id
};
struct KlSoftLoss {
  std::vector<int> nodes;
  Mat target_probs;
};
struct MseLogitsLoss {
  Mat target_logits;
};
using LossSpec = std::variant<CeHardLoss, KlSoftLoss, MseLogitsLoss, PrototypeLossSpec>;

inline std::pair<double, GradBundle> backward(const ModelParams& params,
                                              const Propagator& prop,
                                              const Mat& features,
                                              const LossSpec& spec,
                                              bool need_input_grads) {
  const ForwardPass fp = run_forward(params, prop, features);
  double value = 0.0;
  GradBundle grads;
  if (const auto* proto = std::get_if<PrototypeLossSpec>(&spec);
      proto && !proto->logit_space) {
    const auto el = prototype_alignment_loss(hidden_embedding(fp), *proto);
    value = el.value;
    grads = backward_hidden(fp, el.dembedding, need_input_grads);
  } else {
    LossGrad lg;
    if (const auto* ce = std::get_if<CeHardLoss>(&spec)) {
      lg = cross_entropy_hard(fp.logits, ce->labels, ce->nodes);
    } else if (const auto* kl = std::get_if<KlSoftLoss>(&spec)) {
      lg = kl_soft(fp.logits, kl->target_probs, kl->nodes);
    } else if (const auto* mse = std::get_if<MseLogitsLoss>(&spec)) {
      lg = mse_vs_logits(fp.logits, mse->target_logits);
    } else {
      const auto& proto_spec = std::get<PrototypeLossSpec>(spec);
      const auto el = prototype_alignment_loss(fp.logits, proto_spec);
      lg.value = el.value;
      lg.dlogits = el.dembedding;
    }
    value = lg.value;
    grads = backward_logits(fp, lg.dlogits, need_input_grads);
  }
  if (!std::isfinite(value))
    throw std::runtime_error("backward: non-finite loss value");
  return {value, std::move(grads)};
}

// ---------------------------------------------------------------------------
// Full-batch local training on the train mask.

struct TrainOptions {
  int epochs = 10;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  std::vector<double>* loss_log = nullptr;  // optional per-epoch loss out
};

inline ModelParams train_local(ModelParams params, const Graph& g,
                               const TrainOptions& opts) {
  if (g.masks.train.empty())
    throw std::invalid_argument("train_local: empty train mask");
  const auto prop = Propagator::from_graph(g);
  AdamState adam = AdamState::like(params);
  const LossSpec spec = CeHardLoss{g.masks.train, g.labels};
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    auto [loss, grads] = backward(params, prop, g.features, spec, false);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_local: non-finite loss at epoch " +
                               std::to_string(epoch));
    if (opts.loss_log) opts.loss_log->push_back(loss);
    params = opts.optimizer == Optimizer::kAdam
                 ? adam_step(std::move(params), grads, opts.lr, adam)
                 : sgd_step(std::move(params), grads, opts.lr);
  }
  return params;
}

}  // namespace fgu

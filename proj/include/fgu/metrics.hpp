#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "fgu/gnn.hpp"
#include "fgu/graph.hpp"
#include "fgu/model.hpp"
#include "fgu/rng.hpp"

namespace fgu {

// Argmax class per node; ties resolve to the lowest class id.
inline int predicted_class(const Mat& logits, int node) {
  int best = 0;
  for (Eigen::Index c = 1; c < logits.cols(); ++c)
    if (logits(node, c) > logits(node, best)) best = static_cast<int>(c);
  return best;
}

inline double accuracy_from_logits(const Mat& logits, const std::vector<int>& labels,
                                   const std::vector<int>& mask) {
  if (mask.empty()) throw std::invalid_argument("accuracy: empty mask");
  int correct = 0;
  for (int v : mask)
    if (predicted_class(logits, v) == labels[v]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

inline double accuracy(const ModelParams& params, const Graph& g,
                       const std::vector<int>& mask) {
  return accuracy_from_logits(forward(params, g), g.labels, mask);
}

// Per-node membership score: negative cross-entropy of the model at the
// node's label. Higher score = more member-like.
inline std::vector<double> membership_scores(const ModelParams& params, const Graph& g,
                                             const std::vector<int>& nodes) {
  const Mat logp = log_softmax_rows(forward(params, g));
  std::vector<double> scores;
  scores.reserve(nodes.size());
  for (int v : nodes) scores.push_back(logp(v, g.labels[v]));
  return scores;
}

struct MiaResult {
  double auc = 0.0;
  double accuracy = 0.0;
  double threshold = 0.0;
  int members = 0;
  int non_members = 0;
};

// Exact rank-statistic AUC: P(member score > non-member) + 0.5 P(tie).
inline double auc_rank(const std::vector<double>& member_scores,
                       const std::vector<double>& non_member_scores) {
  double wins = 0.0;
  for (double m : member_scores) {
    for (double n : non_member_scores) {
      if (m > n)
        wins += 1.0;
      else if (m == n)
        wins += 0.5;
    }
  }
  return wins / (static_cast<double>(member_scores.size()) *
                 static_cast<double>(non_member_scores.size()));
}

// Loss-threshold membership inference: scores are negative losses, the
// attack predicts "member" above a threshold. Reports the exact rank AUC
// and the accuracy at the Youden-optimal threshold.
inline MiaResult mia_attack(const ModelParams& params,
                            const std::vector<int>& members,
                            const std::vector<int>& non_members, const Graph& g) {
  if (members.empty() || non_members.empty())
    throw std::invalid_argument("mia_attack: empty member or non-member set");
  for (int v : members)
    for (int w : non_members)
      if (v == w)
        throw std::invalid_argument("mia_attack: node " + std::to_string(v) +
                                    " in both sets");

  const auto member_scores = membership_scores(params, g, members);
  const auto non_member_scores = membership_scores(params, g, non_members);

  MiaResult out;
  out.members = static_cast<int>(members.size());
  out.non_members = static_cast<int>(non_members.size());
  out.auc = auc_rank(member_scores, non_member_scores);

  // Sweep candidate thresholds (every observed score) for max Youden J,
  // predicting member when score >= threshold. Ties keep the higher
  // threshold, scanned in descending order.
  std::vector<double> candidates;
  candidates.insert(candidates.end(), member_scores.begin(), member_scores.end());
  candidates.insert(candidates.end(), non_member_scores.begin(),
                    non_member_scores.end());
  std::sort(candidates.begin(), candidates.end(), std::greater<>());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  double best_j = -2.0;
  for (double threshold : candidates) {
    int tp = 0, fp = 0;
    for (double m : member_scores)
      if (m >= threshold) ++tp;
    for (double n : non_member_scores)
      if (n >= threshold) ++fp;
    const double tpr = static_cast<double>(tp) / out.members;
    const double fpr = static_cast<double>(fp) / out.non_members;
    if (tpr - fpr > best_j) {
      best_j = tpr - fpr;
      out.threshold = threshold;
      out.accuracy = (static_cast<double>(tp) +
                      static_cast<double>(out.non_members - fp)) /
                     static_cast<double>(out.members + out.non_members);
    }
  }
  return out;
}

struct DistanceResult {
  double l2 = 0.0;
  double agreement = 0.0;
};

// Flattened L2 distance over every tensor plus the prediction agreement
// rate on a probe graph.
inline DistanceResult model_distance(const ModelParams& a, const ModelParams& b,
                                     const Graph& probe) {
  if (!a.same_layout(b))
    throw std::invalid_argument("model_distance: layout mismatch");
  DistanceResult out;
  double sq = 0.0;
  for (std::size_t t = 0; t < a.tensors.size(); ++t)
    sq += (a.tensors[t].value - b.tensors[t].value).squaredNorm();
  out.l2 = std::sqrt(sq);
  const Mat la = forward(a, probe);
  const Mat lb = forward(b, probe);
  int agree = 0;
  for (int v = 0; v < probe.num_nodes; ++v)
    if (predicted_class(la, v) == predicted_class(lb, v)) ++agree;
  out.agreement = static_cast<double>(agree) / std::max(1, probe.num_nodes);
  return out;
}

// Edge poisoning: per client, adds ceil(ratio * |E|) absent edges, favoring
// endpoints with different labels. Returns the injected lists so they can
// later be issued as an edge-level removal request.
inline std::vector<std::vector<Edge>> inject_edge_attack(
    std::vector<Graph>& client_graphs, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0)
    throw std::invalid_argument("inject_edge_attack: ratio outside [0,1]");
  std::vector<std::vector<Edge>> injected(client_graphs.size());
  for (std::size_t c = 0; c < client_graphs.size(); ++c) {
    Graph& g = client_graphs[c];
    const int want = static_cast<int>(
        std::ceil(ratio * static_cast<double>(g.edges.size())));
    if (want == 0) continue;

    std::vector<Edge> hetero, homo;
    for (int u = 0; u < g.num_nodes; ++u) {
      for (int v = u + 1; v < g.num_nodes; ++v) {
        if (g.has_edge(u, v)) continue;
        (g.labels[u] != g.labels[v] ? hetero : homo).push_back({u, v});
      }
    }
    if (static_cast<int>(hetero.size() + homo.size()) < want)
      throw std::runtime_error("inject_edge_attack: client " + std::to_string(c) +
                               " too dense to add " + std::to_string(want) +
                               " edges");
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(c) + 101));
    shuffle(hetero, rng);
    shuffle(homo, rng);
    auto& list = injected[c];
    for (int i = 0; i < want; ++i)
      list.push_back(i < static_cast<int>(hetero.size())
                         ? hetero[i]
                         : homo[i - hetero.size()]);
    std::sort(list.begin(), list.end());
    g.edges.insert(g.edges.end(), list.begin(), list.end());
    g.normalize_edges();
    g.validate();
  }
  return injected;
}

}  // namespace fgu

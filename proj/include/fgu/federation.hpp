#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgu/gnn.hpp"
#include "fgu/graph.hpp"
#include "fgu/log.hpp"
#include "fgu/model.hpp"
#include "fgu/parallel.hpp"

namespace fgu {

enum class Weighting { kTrainNodes, kTotalNodes };

struct FederationConfig {
  int rounds = 10;
  int local_epochs = 3;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  Weighting weighting = Weighting::kTrainNodes;
  int workers = 1;
  std::string history_dir;  // empty: keep no on-disk round history
};

inline long long client_weight(const Graph& g, Weighting mode) {
  return mode == Weighting::kTrainNodes
             ? static_cast<long long>(g.masks.train.size())
             : static_cast<long long>(g.num_nodes);
}

// Weighted FedAvg mean of parameter sets. Contributions are accumulated in
// a canonical order (sorted by weight, then by tensor bytes) with 113-bit
// arithmetic: the integer-weight products are exact, so aggregation is
// bitwise invariant to client order and maps identical inputs to themselves.
inline ModelParams aggregate(const std::vector<ModelParams>& params,
                             const std::vector<long long>& weights) {
  if (params.empty()) throw std::invalid_argument("aggregate: empty client list");
  if (params.size() != weights.size())
    throw std::invalid_argument("aggregate: weight count mismatch");
  long long total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_layout(params[0]))
      throw std::invalid_argument("aggregate: parameter layout mismatch at client " +
                                  std::to_string(i));
    if (weights[i] < 0) throw std::invalid_argument("aggregate: negative weight");
    total += weights[i];
  }
  if (total <= 0) throw std::invalid_argument("aggregate: all weights are zero");

  std::vector<std::size_t> order(params.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (weights[a] != weights[b]) return weights[a] < weights[b];
    for (std::size_t t = 0; t < params[a].tensors.size(); ++t) {
      const Mat& x = params[a].tensors[t].value;
      const Mat& y = params[b].tensors[t].value;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (x.data()[k] != y.data()[k]) return x.data()[k] < y.data()[k];
      }
    }
    return false;
  });

  ModelParams out = params[0];
  for (std::size_t t = 0; t < out.tensors.size(); ++t) {
    Mat& acc_target = out.tensors[t].value;
    for (Eigen::Index k = 0; k < acc_target.size(); ++k) {
      __float128 acc = 0;
      for (std::size_t i : order) {
        acc += static_cast<__float128>(weights[i]) *
               static_cast<__float128>(params[i].tensors[t].value.data()[k]);
      }
      acc_target.data()[k] = static_cast<double>(acc / static_cast<__float128>(total));
    }
  }
  return out;
}

// FedAvg simulation state: global model, per-client local models and
// subgraphs, per-client weights and round counter.
struct FederationState {
  int round = 0;
  ModelParams global;
  std::vector<ModelParams> client_params;
  std::vector<Graph> client_graphs;
  FederationConfig config;

  int num_clients() const { return static_cast<int>(client_graphs.size()); }

  std::vector<long long> weights() const {
    std::vector<long long> w;
    w.reserve(client_graphs.size());
    for (const auto& g : client_graphs)
      w.push_back(client_weight(g, config.weighting));
    return w;
  }
};

inline FederationState make_federation(std::vector<Graph> clients, Backbone backbone,
                                       int hidden, std::uint64_t train_seed,
                                       FederationConfig config,
                                       int propagation_depth = 2) {
  if (clients.empty()) throw std::invalid_argument("federation: no clients");
  const int d_in = clients[0].feature_dim();
  const int num_classes = clients[0].num_classes;
  for (const auto& g : clients) {
    if (g.feature_dim() != d_in || g.num_classes != num_classes)
      throw std::invalid_argument("federation: client graphs disagree on dims");
  }
  long long total_weight = 0;
  for (const auto& g : clients) total_weight += client_weight(g, config.weighting);
  if (total_weight <= 0)
    throw std::invalid_argument("federation: no client holds training data");

  FederationState state;
  state.global = init_params(backbone, d_in, hidden, num_classes, train_seed,
                             propagation_depth);
  state.client_params.assign(clients.size(), state.global);
  state.client_graphs = std::move(clients);
  state.config = std::move(config);
  return state;
}

namespace detail {

inline void write_round_checkpoint(const FederationState& state) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(state.config.history_dir) /
                       ("round_" + std::to_string(state.round));
  fs::create_directories(dir);
  save_checkpoint(state.global, (dir / "global").string());
}

}  // namespace detail

// One FedAvg round: broadcast the global model, train every client locally,
// aggregate by data size. Clients with no train nodes keep the broadcast
// model and contribute weight zero.
inline void run_round(FederationState& state) {
  const int k = state.num_clients();
  TrainOptions opts;
  opts.epochs = state.config.local_epochs;
  opts.lr = state.config.lr;
  opts.optimizer = state.config.optimizer;
  parallel_for(k, state.config.workers, [&](int c) {
    const Graph& g = state.client_graphs[c];
    state.client_params[c] =
        g.masks.train.empty() ? state.global : train_local(state.global, g, opts);
  });
  for (int c = 0; c < k; ++c) {
    if (!state.client_params[c].same_layout(state.global))
      throw std::logic_error("run_round: client " + std::to_string(c) +
                             " broke the parameter layout");
  }
  state.global = aggregate(state.client_params, state.weights());
  ++state.round;
  if (!state.config.history_dir.empty()) detail::write_round_checkpoint(state);
}

inline void run_training(FederationState& state, int rounds) {
  for (int r = 0; r < rounds; ++r) {
    run_round(state);
    log::debug("round ", state.round, " of ", rounds, " complete");
  }
}

}  // namespace fgu

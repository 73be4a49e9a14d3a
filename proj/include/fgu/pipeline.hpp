#pragma once

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "fgu/adversarial.hpp"
#include "fgu/distill.hpp"
#include "fgu/federation.hpp"
#include "fgu/log.hpp"
#include "fgu/prototype.hpp"

namespace fgu {

struct UnlearnRequest {
  enum class Kind { kMeta, kClient };
  Kind kind = Kind::kMeta;
  std::vector<MetaRemoval> removals;   // meta: one entry per requesting client
  std::vector<int> departing_clients;  // client: ids leaving the federation

  bool empty() const {
    if (kind == Kind::kClient) return departing_clients.empty();
    for (const auto& r : removals)
      if (!r.empty()) return false;
    return true;
  }
};

struct AdvProvenance {
  int client = -1;
  AdvLosses initial_losses, final_losses;
  int iterations = 0;
};

struct StageTimings {
  double prototype_sec = 0.0;
  double adversarial_sec = 0.0;
  double distill_sec = 0.0;
  double total_sec = 0.0;
};

struct PageConfig {
  double tau = 0.8;
  UnlearnOptions unlearn;  // stage 1 fine-tuning
  AdvConfig adv;           // stage 2
  DistillConfig distill;   // stage 3
  std::uint64_t noise_seed = 0;  // fresh models for departing clients
  EmbeddingSpace space = EmbeddingSpace::kHidden;
};

struct UnlearnOutcome {
  ModelParams global_unlearned;            // theta_bar
  std::vector<ModelParams> client_params;  // theta_bar^i per surviving client
  std::vector<int> influenced;             // union over requesters, sorted
  std::vector<AdvProvenance> adversarial;
  std::vector<AdversarialGraph> adv_graphs;
  StageTimings timings;
  std::vector<int> excluded_clients;  // empty-train clients left out of theta_bar
  std::vector<int> retained_clients;  // surviving ids (client unlearning)
  std::vector<int> forgotten_origins; // original node ids removed (meta)
};

namespace detail {

class StageClock {
 public:
  StageClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline std::vector<PrototypeSet> all_client_prototypes(const FederationState& state,
                                                       EmbeddingSpace space) {
  std::vector<PrototypeSet> out;
  for (int c = 0; c < state.num_clients(); ++c) {
    const Graph& g = state.client_graphs[c];
    std::vector<int> nodes(g.num_nodes);
    std::iota(nodes.begin(), nodes.end(), 0);
    out.push_back(compute_prototypes(state.client_params[c], g, nodes, space, c));
  }
  return out;
}

// Basis input: retained clients' prototypes in ascending (client, class) order.
inline std::vector<Vec> basis_vectors(const std::vector<PrototypeSet>& prototypes,
                                      int excluded_client) {
  std::vector<Vec> out;
  for (const auto& p : prototypes) {
    if (p.client_id == excluded_client) continue;
    for (const auto& [c, vec] : p.by_class) out.push_back(vec);
  }
  return out;
}

// Aggregate every client that still holds training data; warn about and
// report the ones that do not.
inline ModelParams aggregate_with_exclusions(const FederationState& state,
                                             std::vector<int>* excluded) {
  std::vector<ModelParams> params;
  std::vector<long long> weights;
  for (int c = 0; c < state.num_clients(); ++c) {
    const long long w = client_weight(state.client_graphs[c], state.config.weighting);
    if (w > 0) {
      params.push_back(state.client_params[c]);
      weights.push_back(w);
    } else {
      log::warn("client ", c, " has no training data left; excluded from aggregation");
      if (excluded) excluded->push_back(c);
    }
  }
  if (params.empty())
    throw std::runtime_error("aggregation: no client holds training data");
  return aggregate(params, weights);
}

}  // namespace detail

// Meta unlearning: per requesting client, prototype-guided local unlearn,
// adversarial probe generation, negative distillation on influenced
// clients, then removal of the forgotten data and a final aggregation.
// Requesters are processed in ascending client-id order.
inline UnlearnOutcome meta_unlearn_pipeline(FederationState& state,
                                            const UnlearnRequest& request,
                                            const PageConfig& page) {
  if (request.kind != UnlearnRequest::Kind::kMeta)
    throw std::invalid_argument("meta_unlearn_pipeline: wrong request kind");
  std::vector<MetaRemoval> removals = request.removals;
  std::sort(removals.begin(), removals.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  std::set<int> seen;
  for (const auto& r : removals) {
    if (r.client_id < 0 || r.client_id >= state.num_clients())
      throw std::invalid_argument("meta_unlearn_pipeline: unknown client " +
                                  std::to_string(r.client_id));
    if (!seen.insert(r.client_id).second)
      throw std::invalid_argument("meta_unlearn_pipeline: duplicate removal for client " +
                                  std::to_string(r.client_id));
  }

  const detail::StageClock total;
  UnlearnOutcome outcome;
  std::set<int> influenced_union;

  for (const auto& removal : removals) {
    if (removal.empty()) continue;
    const int u = removal.client_id;
    const Graph& graph_u = state.client_graphs[u];
    const ModelParams theta_u = state.client_params[u];

    // Stage 1: prototype matching and local unlearn.
    const detail::StageClock clock1;
    const auto prototypes = detail::all_client_prototypes(state, page.space);
    const auto scope = removal_node_scope(graph_u, removal);
    const auto p_del =
        compute_prototypes(theta_u, graph_u, scope, page.space, u);
    const auto basis = gram_schmidt(detail::basis_vectors(prototypes, u));
    const auto direction = project_private(p_del, basis);
    UnlearnOptions unlearn_opts = page.unlearn;
    unlearn_opts.space = page.space;
    const ModelParams theta_bar_u =
        local_unlearn(theta_u, graph_u, removal, direction, unlearn_opts);
    state.client_params[u] = theta_bar_u;
    outcome.timings.prototype_sec += clock1.seconds();

    // Stage 2: adversarial probe from the pre/post pair.
    const detail::StageClock clock2;
    AdvConfig adv_cfg = page.adv;
    adv_cfg.seed = Rng::mix(page.adv.seed, static_cast<std::uint64_t>(u));
    AdversarialGraph adv = generate(theta_u, theta_bar_u, adv_cfg);
    outcome.adversarial.push_back(
        {u, adv.initial_losses, adv.final_losses, adv.iterations});
    outcome.timings.adversarial_sec += clock2.seconds();

    // Stage 3: negative distillation on influenced clients.
    const detail::StageClock clock3;
    const auto influenced = select_influenced(prototypes, u, page.tau);
    distill_round(state, influenced, theta_bar_u, adv, page.distill);
    influenced_union.insert(influenced.begin(), influenced.end());
    outcome.timings.distill_sec += clock3.seconds();

    // Forgotten data leaves the client's graph for good.
    for (int v : removal.removed_nodes)
      outcome.forgotten_origins.push_back(graph_u.origin_of(v));
    state.client_graphs[u] = apply_meta_removal(graph_u, removal);
    outcome.adv_graphs.push_back(std::move(adv));
  }

  state.global = detail::aggregate_with_exclusions(state, &outcome.excluded_clients);
  outcome.global_unlearned = state.global;
  outcome.client_params = state.client_params;
  outcome.influenced.assign(influenced_union.begin(), influenced_union.end());
  std::sort(outcome.forgotten_origins.begin(), outcome.forgotten_origins.end());
  outcome.timings.total_sec = total.seconds();
  return outcome;
}

// Client unlearning: each departing client's unlearned model is a freshly
// initialized noise model; the probe and distillation clean the retained
// clients, then the departing clients and their data leave the federation.
inline UnlearnOutcome client_unlearn_pipeline(FederationState& state,
                                              const UnlearnRequest& request,
                                              const PageConfig& page) {
  if (request.kind != UnlearnRequest::Kind::kClient)
    throw std::invalid_argument("client_unlearn_pipeline: wrong request kind");
  std::vector<int> departing = request.departing_clients;
  std::sort(departing.begin(), departing.end());
  departing.erase(std::unique(departing.begin(), departing.end()), departing.end());
  if (departing.empty())
    throw std::invalid_argument("client_unlearn_pipeline: empty departure set");
  if (static_cast<int>(departing.size()) >= state.num_clients())
    throw std::invalid_argument(
        "client_unlearn_pipeline: cannot unlearn every client");
  for (int u : departing)
    if (u < 0 || u >= state.num_clients())
      throw std::invalid_argument("client_unlearn_pipeline: unknown client " +
                                  std::to_string(u));

  const detail::StageClock total;
  UnlearnOutcome outcome;
  std::set<int> influenced_union;
  const std::set<int> departing_set(departing.begin(), departing.end());

  const detail::StageClock clock1;
  const auto prototypes = detail::all_client_prototypes(state, page.space);
  outcome.timings.prototype_sec += clock1.seconds();

  for (const int u : departing) {
    const ModelParams& theta_u = state.client_params[u];
    const ModelParams noise_model = init_params(
        theta_u.backbone, theta_u.input_dim(), theta_u.hidden_dim(),
        theta_u.num_classes(), Rng::mix(page.noise_seed, static_cast<std::uint64_t>(u)),
        theta_u.propagation_depth);

    const detail::StageClock clock2;
    AdvConfig adv_cfg = page.adv;
    adv_cfg.seed = Rng::mix(page.adv.seed, static_cast<std::uint64_t>(u));
    AdversarialGraph adv = generate(theta_u, noise_model, adv_cfg);
    outcome.adversarial.push_back(
        {u, adv.initial_losses, adv.final_losses, adv.iterations});
    outcome.timings.adversarial_sec += clock2.seconds();

    // Influence is judged among retained clients only.
    const detail::StageClock clock3;
    std::vector<PrototypeSet> candidates;
    for (const auto& p : prototypes)
      if (p.client_id == u || !departing_set.count(p.client_id))
        candidates.push_back(p);
    const auto influenced = select_influenced(candidates, u, page.tau);
    distill_round(state, influenced, noise_model, adv, page.distill);
    influenced_union.insert(influenced.begin(), influenced.end());
    outcome.timings.distill_sec += clock3.seconds();
    outcome.adv_graphs.push_back(std::move(adv));
  }

  // Departing clients and their data leave the federation.
  FederationState retained;
  retained.round = state.round;
  retained.config = state.config;
  for (int c = 0; c < state.num_clients(); ++c) {
    if (departing_set.count(c)) continue;
    retained.client_graphs.push_back(std::move(state.client_graphs[c]));
    retained.client_params.push_back(std::move(state.client_params[c]));
    outcome.retained_clients.push_back(c);
  }
  retained.global = detail::aggregate_with_exclusions(retained, &outcome.excluded_clients);
  state = std::move(retained);

  outcome.global_unlearned = state.global;
  outcome.client_params = state.client_params;
  outcome.influenced.assign(influenced_union.begin(), influenced_union.end());
  outcome.timings.total_sec = total.seconds();
  return outcome;
}

// Gold standard: rebuild the retained federation and train it from scratch
// with the original seed and schedule.
inline ModelParams retrain_oracle(const std::vector<Graph>& original_clients,
                                  const UnlearnRequest& request, Backbone backbone,
                                  int hidden, std::uint64_t train_seed,
                                  const FederationConfig& config,
                                  int propagation_depth = 2) {
  std::vector<Graph> retained;
  if (request.kind == UnlearnRequest::Kind::kMeta) {
    retained = original_clients;
    for (const auto& removal : request.removals) {
      if (removal.client_id < 0 ||
          removal.client_id >= static_cast<int>(retained.size()))
        throw std::invalid_argument("retrain_oracle: unknown client " +
                                    std::to_string(removal.client_id));
      retained[removal.client_id] =
          apply_meta_removal(retained[removal.client_id], removal);
    }
  } else {
    const std::set<int> departing(request.departing_clients.begin(),
                                  request.departing_clients.end());
    for (int c = 0; c < static_cast<int>(original_clients.size()); ++c)
      if (!departing.count(c)) retained.push_back(original_clients[c]);
    if (retained.empty())
      throw std::invalid_argument("retrain_oracle: no client retained");
  }
  FederationConfig fresh = config;
  fresh.history_dir.clear();
  auto state = make_federation(std::move(retained), backbone, hidden, train_seed,
                               fresh, propagation_depth);
  run_training(state, fresh.rounds);
  return state.global;
}

// Audit scan: true when none of the forgotten original node ids appear in
// any client graph.
inline bool forgotten_data_absent(const FederationState& state,
                                  const std::vector<int>& forgotten_origins) {
  const std::set<int> forbidden(forgotten_origins.begin(), forgotten_origins.end());
  for (const auto& g : state.client_graphs)
    for (int v = 0; v < g.num_nodes; ++v)
      if (forbidden.count(g.origin_of(v))) return false;
  return true;
}

}  // namespace fgu

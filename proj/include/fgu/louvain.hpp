#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fgu/graph.hpp"

namespace fgu::louvain {

namespace detail {

// Weighted multigraph for the aggregation levels. loops[v] holds the
// total weight folded into v's self-loop (counted twice in its strength).
struct WeightedGraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // no self entries
  std::vector<double> loops;
  std::vector<double> strength;  // sum of incident weights + 2 * loop
  double total_weight2 = 0;      // 2m

  static WeightedGraph from_graph(const Graph& g) {
    WeightedGraph w;
    w.n = g.num_nodes;
    w.adj.resize(w.n);
    w.loops.assign(w.n, 0.0);
    for (const auto& [u, v] : g.edges) {
      w.adj[u].emplace_back(v, 1.0);
      w.adj[v].emplace_back(u, 1.0);
    }
    w.finalize();
    return w;
  }

  void finalize() {
    strength.assign(n, 0.0);
    total_weight2 = 0;
    for (int v = 0; v < n; ++v) {
      double s = 2.0 * loops[v];
      for (const auto& [u, wgt] : adj[v]) s += wgt;
      strength[v] = s;
      total_weight2 += s;
    }
  }
};

inline double modularity(const WeightedGraph& g, const std::vector<int>& comm) {
  if (g.total_weight2 <= 0) return 0.0;
  const int nc = *std::max_element(comm.begin(), comm.end()) + 1;
  std::vector<double> inside(nc, 0.0), total(nc, 0.0);
  for (int v = 0; v < g.n; ++v) {
    total[comm[v]] += g.strength[v];
    inside[comm[v]] += 2.0 * g.loops[v];
    for (const auto& [u, w] : g.adj[v])
      if (comm[u] == comm[v]) inside[comm[v]] += w;
  }
  double q = 0.0;
  for (int c = 0; c < nc; ++c) {
    const double frac = total[c] / g.total_weight2;
    q += inside[c] / g.total_weight2 - frac * frac;
  }
  return q;
}

// One level of local moves. Nodes are visited in ascending id; a node moves
// to the neighboring community with the largest strictly positive gain,
// lowest community id winning ties. Returns true if anything moved.
inline bool local_moves(const WeightedGraph& g, std::vector<int>& comm) {
  if (g.total_weight2 <= 0) return false;
  std::vector<double> total(g.n, 0.0);
  for (int v = 0; v < g.n; ++v) total[comm[v]] += g.strength[v];

  bool any_move = false;
  bool improved = true;
  double q_prev = modularity(g, comm);
  while (improved) {
    improved = false;
    for (int v = 0; v < g.n; ++v) {
      const int home = comm[v];
      // Links from v into each adjacent community (own community excluded of v).
      std::map<int, double> links;
      links[home] = 0.0;
      for (const auto& [u, w] : g.adj[v]) links[comm[u]] += w;

      total[home] -= g.strength[v];
      const double scale = g.strength[v] / (g.total_weight2 * g.total_weight2 / 2.0);
      auto gain = [&](int c) {
        return 2.0 * links[c] / g.total_weight2 - total[c] * scale;
      };
      // links is ordered by community id, so the first candidate seen wins
      // ties; a move needs a strictly positive gain over staying put.
      int best = home;
      double best_gain = gain(home);
      for (const auto& [c, w] : links) {
        (void)w;
        const double gq = gain(c);
        if (gq > best_gain + 1e-12) {
          best = c;
          best_gain = gq;
        }
      }
      total[best] += g.strength[v];
      if (best != home) {
        comm[v] = best;
        improved = true;
        any_move = true;
      }
    }
    // Each full pass may only raise modularity.
    const double q_now = modularity(g, comm);
    if (q_now < q_prev - 1e-9)
      throw std::logic_error("louvain: modularity decreased within a pass");
    q_prev = q_now;
  }
  return any_move;
}

inline void renumber(std::vector<int>& comm) {
  std::vector<int> remap(comm.size(), -1);
  int next = 0;
  for (int& c : comm) {
    if (remap[c] < 0) remap[c] = next++;
    c = remap[c];
  }
}

inline WeightedGraph aggregate(const WeightedGraph& g, const std::vector<int>& comm) {
  const int nc = *std::max_element(comm.begin(), comm.end()) + 1;
  WeightedGraph out;
  out.n = nc;
  out.adj.resize(nc);
  out.loops.assign(nc, 0.0);
  std::vector<std::map<int, double>> merged(nc);
  for (int v = 0; v < g.n; ++v) {
    out.loops[comm[v]] += g.loops[v];
    for (const auto& [u, w] : g.adj[v]) {
      if (comm[u] == comm[v]) {
        if (u > v) continue;  // each intra pair once
        out.loops[comm[v]] += w;
      } else {
        merged[comm[v]][comm[u]] += w;
      }
    }
  }
  for (int c = 0; c < nc; ++c)
    for (const auto& [u, w] : merged[c]) out.adj[c].emplace_back(u, w);
  out.finalize();
  return out;
}

}  // namespace detail

// Community ids per node after full two-phase Louvain, renumbered by first
// appearance in node order. Fully deterministic: node order, tie rules and
// aggregation are all id-driven.
inline std::vector<int> communities(const Graph& g) {
  detail::WeightedGraph level = detail::WeightedGraph::from_graph(g);
  std::vector<int> node_comm(g.num_nodes);
  std::iota(node_comm.begin(), node_comm.end(), 0);

  while (true) {
    std::vector<int> comm(level.n);
    std::iota(comm.begin(), comm.end(), 0);
    const bool moved = detail::local_moves(level, comm);
    if (!moved) break;
    detail::renumber(comm);
    for (int v = 0; v < g.num_nodes; ++v) node_comm[v] = comm[node_comm[v]];
    const auto next = detail::aggregate(level, comm);
    if (next.n == level.n) break;
    level = next;
  }
  detail::renumber(node_comm);
  return node_comm;
}

}  // namespace fgu::louvain

namespace fgu {

// Louvain community split packed into K clients: communities are assigned
// largest-first to the currently smallest client. When Louvain finds fewer
// communities than K, the largest ones are halved until K can be covered.
// The seed parameter is accepted for interface stability; the algorithm is
// deterministic by node id and never draws from it.
inline Partition louvain_partition(const Graph& g, int num_clients, std::uint64_t seed) {
  (void)seed;
  if (num_clients < 1)
    throw std::invalid_argument("louvain_partition: need at least one client");
  if (num_clients > g.num_nodes)
    throw std::invalid_argument("louvain_partition: more clients (" +
                                std::to_string(num_clients) + ") than nodes (" +
                                std::to_string(g.num_nodes) + ")");

  const auto comm = louvain::communities(g);
  const int nc = *std::max_element(comm.begin(), comm.end()) + 1;
  std::vector<std::vector<int>> groups(nc);
  for (int v = 0; v < g.num_nodes; ++v) groups[comm[v]].push_back(v);

  while (static_cast<int>(groups.size()) < num_clients) {
    auto largest = std::max_element(
        groups.begin(), groups.end(), [](const auto& a, const auto& b) {
          return a.size() < b.size();
        });
    const auto half = static_cast<std::ptrdiff_t>(largest->size() / 2);
    std::vector<int> tail(largest->begin() + half, largest->end());
    largest->resize(static_cast<std::size_t>(half));
    groups.push_back(std::move(tail));
  }

  // Largest community first; ties by lowest community id (stable sort).
  std::vector<int> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return groups[a].size() > groups[b].size();
  });

  Partition part;
  part.num_clients = num_clients;
  part.assignments.assign(g.num_nodes, -1);
  std::vector<int> load(num_clients, 0);
  for (int c : order) {
    const int target = static_cast<int>(
        std::min_element(load.begin(), load.end()) - load.begin());
    for (int v : groups[c]) part.assignments[v] = target;
    load[target] += static_cast<int>(groups[c].size());
  }
  part.validate(g.num_nodes);
  return part;
}

}  // namespace fgu

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fgu {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Edge = std::pair<int, int>;  // stored with first < second

inline Edge make_edge(int u, int v) {
  return u < v ? Edge{u, v} : Edge{v, u};
}

struct Masks {
  std::vector<int> train, val, test;
};

// Undirected attributed graph. Edges are kept as a sorted, deduplicated
// list of (u, v) pairs with u < v; adjacency indices are built on demand.
// Instances are treated as immutable values once constructed.
struct Graph {
  int num_nodes = 0;
  int num_classes = 0;
  Mat features;              // num_nodes x feature_dim
  std::vector<int> labels;   // per node, in [0, num_classes)
  std::vector<Edge> edges;
  Masks masks;
  // Original node ids when this graph is a re-indexed view of another
  // (client subgraphs, post-removal graphs). Empty means identity.
  std::vector<int> origin;

  int feature_dim() const { return static_cast<int>(features.cols()); }

  bool has_edge(int u, int v) const {
    return std::binary_search(edges.begin(), edges.end(), make_edge(u, v));
  }

  int origin_of(int node) const {
    return origin.empty() ? node : origin[node];
  }

  void normalize_edges() {
    for (auto& e : edges) e = make_edge(e.first, e.second);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }

  void validate() const {
    if (num_nodes < 0) throw std::invalid_argument("graph: negative node count");
    if (features.rows() != num_nodes)
      throw std::invalid_argument("graph: feature row count " +
                                  std::to_string(features.rows()) +
                                  " != num_nodes " + std::to_string(num_nodes));
    if (static_cast<int>(labels.size()) != num_nodes)
      throw std::invalid_argument("graph: label count mismatch");
    for (int v = 0; v < num_nodes; ++v) {
      if (labels[v] < 0 || labels[v] >= num_classes)
        throw std::invalid_argument("graph: node " + std::to_string(v) +
                                    " label " + std::to_string(labels[v]) +
                                    " outside [0, " + std::to_string(num_classes) + ")");
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const auto [u, v] = edges[i];
      if (u == v)
        throw std::invalid_argument("graph: edge " + std::to_string(i) +
                                    ": self-loop (" + std::to_string(u) + "," +
                                    std::to_string(v) + ")");
      if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
        throw std::invalid_argument("graph: edge " + std::to_string(i) +
                                    ": endpoint out of range (" + std::to_string(u) +
                                    "," + std::to_string(v) + ")");
      if (u > v)
        throw std::invalid_argument("graph: edge " + std::to_string(i) +
                                    ": not stored as (min,max)");
      if (i > 0 && edges[i] == edges[i - 1])
        throw std::invalid_argument("graph: duplicate edge (" + std::to_string(u) +
                                    "," + std::to_string(v) + ")");
      if (i > 0 && edges[i] < edges[i - 1])
        throw std::invalid_argument("graph: edge list not sorted");
    }
    std::vector<char> seen(num_nodes, 0);
    auto check_mask = [&](const std::vector<int>& mask, const char* name) {
      for (int v : mask) {
        if (v < 0 || v >= num_nodes)
          throw std::invalid_argument(std::string("graph: ") + name +
                                      " mask node " + std::to_string(v) +
                                      " out of range");
        if (seen[v])
          throw std::invalid_argument("graph: node " + std::to_string(v) +
                                      " appears in more than one mask");
        seen[v] = 1;
      }
    };
    check_mask(masks.train, "train");
    check_mask(masks.val, "val");
    check_mask(masks.test, "test");
    if (!origin.empty() && static_cast<int>(origin.size()) != num_nodes)
      throw std::invalid_argument("graph: origin map size mismatch");
  }
};

// Compressed neighbor index over the undirected edge list.
struct Csr {
  std::vector<int> offsets;    // size num_nodes + 1
  std::vector<int> neighbors;  // size 2 * |edges|

  static Csr build(const Graph& g) {
    Csr csr;
    csr.offsets.assign(g.num_nodes + 1, 0);
    for (const auto& [u, v] : g.edges) {
      ++csr.offsets[u + 1];
      ++csr.offsets[v + 1];
    }
    for (int i = 0; i < g.num_nodes; ++i) csr.offsets[i + 1] += csr.offsets[i];
    csr.neighbors.resize(csr.offsets.back());
    std::vector<int> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
    for (const auto& [u, v] : g.edges) {
      csr.neighbors[cursor[u]++] = v;
      csr.neighbors[cursor[v]++] = u;
    }
    return csr;
  }

  int degree(int v) const { return offsets[v + 1] - offsets[v]; }

  const int* begin(int v) const { return neighbors.data() + offsets[v]; }
  const int* end(int v) const { return neighbors.data() + offsets[v + 1]; }
};

// One client's share of a meta unlearn request: nodes to delete, edges to
// delete and nodes whose feature rows are zeroed. Node ids are local to the
// client's subgraph.
struct MetaRemoval {
  int client_id = 0;
  std::vector<int> removed_nodes;
  std::vector<Edge> removed_edges;
  std::vector<int> feature_masked_nodes;

  bool empty() const {
    return removed_nodes.empty() && removed_edges.empty() &&
           feature_masked_nodes.empty();
  }
};

struct Partition {
  std::vector<int> assignments;  // per node client id
  int num_clients = 0;

  void validate(int num_nodes) const {
    if (static_cast<int>(assignments.size()) != num_nodes)
      throw std::invalid_argument("partition: assignment count mismatch");
    std::vector<char> used(num_clients, 0);
    for (int a : assignments) {
      if (a < 0 || a >= num_clients)
        throw std::invalid_argument("partition: client id " + std::to_string(a) +
                                    " out of range");
      used[a] = 1;
    }
    for (int c = 0; c < num_clients; ++c)
      if (!used[c])
        throw std::invalid_argument("partition: client " + std::to_string(c) +
                                    " holds no nodes");
  }
};

// Induced subgraph of one client: assigned nodes re-indexed densely,
// cross-client edges dropped, masks restricted.
inline Graph client_subgraph(const Graph& g, const Partition& part, int client_id) {
  if (client_id < 0 || client_id >= part.num_clients)
    throw std::invalid_argument("client_subgraph: invalid client id " +
                                std::to_string(client_id));
  std::vector<int> local_of(g.num_nodes, -1);
  std::vector<int> nodes;
  for (int v = 0; v < g.num_nodes; ++v) {
    if (part.assignments[v] == client_id) {
      local_of[v] = static_cast<int>(nodes.size());
      nodes.push_back(v);
    }
  }
  Graph sub;
  sub.num_nodes = static_cast<int>(nodes.size());
  sub.num_classes = g.num_classes;
  sub.features.resize(sub.num_nodes, g.feature_dim());
  sub.labels.resize(sub.num_nodes);
  sub.origin.resize(sub.num_nodes);
  for (int i = 0; i < sub.num_nodes; ++i) {
    sub.features.row(i) = g.features.row(nodes[i]);
    sub.labels[i] = g.labels[nodes[i]];
    sub.origin[i] = g.origin_of(nodes[i]);
  }
  for (const auto& [u, v] : g.edges) {
    if (local_of[u] >= 0 && local_of[v] >= 0)
      sub.edges.push_back(make_edge(local_of[u], local_of[v]));
  }
  sub.normalize_edges();
  auto remap_mask = [&](const std::vector<int>& mask) {
    std::vector<int> out;
    for (int v : mask)
      if (local_of[v] >= 0) out.push_back(local_of[v]);
    std::sort(out.begin(), out.end());
    return out;
  };
  sub.masks.train = remap_mask(g.masks.train);
  sub.masks.val = remap_mask(g.masks.val);
  sub.masks.test = remap_mask(g.masks.test);
  sub.validate();
  return sub;
}

// Applies one meta removal and returns the retained graph: removed nodes
// are deleted with their incident edges and remaining nodes re-indexed,
// removed edges are deleted, feature-masked rows are zeroed.
inline Graph apply_meta_removal(const Graph& g, const MetaRemoval& removal) {
  for (int v : removal.removed_nodes)
    if (v < 0 || v >= g.num_nodes)
      throw std::invalid_argument("apply_meta_removal: node " + std::to_string(v) +
                                  " does not exist");
  for (int v : removal.feature_masked_nodes)
    if (v < 0 || v >= g.num_nodes)
      throw std::invalid_argument("apply_meta_removal: feature node " +
                                  std::to_string(v) + " does not exist");
  for (const auto& [u, v] : removal.removed_edges)
    if (!g.has_edge(u, v))
      throw std::invalid_argument("apply_meta_removal: edge (" + std::to_string(u) +
                                  "," + std::to_string(v) + ") does not exist");

  std::vector<char> dropped(g.num_nodes, 0);
  for (int v : removal.removed_nodes) dropped[v] = 1;
  std::set<Edge> dropped_edges;
  for (const auto& [u, v] : removal.removed_edges)
    dropped_edges.insert(make_edge(u, v));

  std::vector<int> local_of(g.num_nodes, -1);
  std::vector<int> kept;
  for (int v = 0; v < g.num_nodes; ++v) {
    if (!dropped[v]) {
      local_of[v] = static_cast<int>(kept.size());
      kept.push_back(v);
    }
  }

  Graph out;
  out.num_nodes = static_cast<int>(kept.size());
  out.num_classes = g.num_classes;
  out.features.resize(out.num_nodes, g.feature_dim());
  out.labels.resize(out.num_nodes);
  out.origin.resize(out.num_nodes);
  for (int i = 0; i < out.num_nodes; ++i) {
    out.features.row(i) = g.features.row(kept[i]);
    out.labels[i] = g.labels[kept[i]];
    out.origin[i] = g.origin_of(kept[i]);
  }
  for (int v : removal.feature_masked_nodes)
    if (local_of[v] >= 0) out.features.row(local_of[v]).setZero();
  for (const auto& e : g.edges) {
    if (dropped_edges.count(e)) continue;
    if (local_of[e.first] >= 0 && local_of[e.second] >= 0)
      out.edges.push_back(make_edge(local_of[e.first], local_of[e.second]));
  }
  out.normalize_edges();
  auto remap_mask = [&](const std::vector<int>& mask) {
    std::vector<int> res;
    for (int v : mask)
      if (local_of[v] >= 0) res.push_back(local_of[v]);
    std::sort(res.begin(), res.end());
    return res;
  };
  out.masks.train = remap_mask(g.masks.train);
  out.masks.val = remap_mask(g.masks.val);
  out.masks.test = remap_mask(g.masks.test);
  out.validate();
  return out;
}

// Nodes whose data a removal touches: deleted nodes, endpoints of deleted
// edges and feature-masked nodes. This is the subset the unlearn prototype
// is computed over.
inline std::vector<int> removal_node_scope(const Graph& g, const MetaRemoval& removal) {
  std::set<int> scope(removal.removed_nodes.begin(), removal.removed_nodes.end());
  for (const auto& [u, v] : removal.removed_edges) {
    scope.insert(u);
    scope.insert(v);
  }
  scope.insert(removal.feature_masked_nodes.begin(),
               removal.feature_masked_nodes.end());
  for (int v : scope)
    if (v < 0 || v >= g.num_nodes)
      throw std::invalid_argument("removal scope: node " + std::to_string(v) +
                                  " does not exist");
  return {scope.begin(), scope.end()};
}

}  // namespace fgu

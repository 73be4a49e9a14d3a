#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fgu/graph.hpp"
#include "fgu/rng.hpp"

namespace fgu {

struct SbmBlock {
  int size = 0;
  int class_id = 0;
};

struct SbmConfig {
  std::vector<SbmBlock> blocks;
  double p_in = 0.1;
  double p_out = 0.01;
  int feature_dim = 16;
  // Feature model: per-class mean of norm mean_scale, plus a per-block
  // jitter, plus unit per-node noise. Same-class blocks share the class
  // mean so labels stay recoverable from features.
  double mean_scale = 3.0;
  double block_jitter = 0.25;
  double noise = 1.0;
  double train_frac = 0.2;
  double val_frac = 0.4;

  void validate() const {
    if (blocks.empty()) throw std::invalid_argument("sbm: no blocks");
    for (const auto& b : blocks) {
      if (b.size < 1) throw std::invalid_argument("sbm: block size must be >= 1");
      if (b.class_id < 0) throw std::invalid_argument("sbm: negative class id");
    }
    if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
      throw std::invalid_argument("sbm: probabilities must lie in [0,1]");
    if (feature_dim < 1) throw std::invalid_argument("sbm: feature_dim must be >= 1");
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1)
      throw std::invalid_argument("sbm: invalid mask fractions");
  }
};

// Stochastic block model generator. Within-block pairs get edges with
// probability p_in, cross-block pairs with p_out; labels equal block class
// ids. Bitwise deterministic for a fixed seed.
inline Graph sbm_generate(const SbmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const int num_blocks = static_cast<int>(cfg.blocks.size());
  int num_classes = 0;
  for (const auto& b : cfg.blocks) num_classes = std::max(num_classes, b.class_id + 1);

  Graph g;
  g.num_classes = num_classes;
  g.num_nodes = 0;
  std::vector<int> block_of;
  for (int b = 0; b < num_blocks; ++b) {
    g.num_nodes += cfg.blocks[b].size;
    block_of.insert(block_of.end(), cfg.blocks[b].size, b);
  }
  g.labels.resize(g.num_nodes);
  for (int v = 0; v < g.num_nodes; ++v) g.labels[v] = cfg.blocks[block_of[v]].class_id;

  // Independent streams so changing one stage never shifts another.
  Rng edge_rng(Rng::mix(seed, 1));
  Rng feat_rng(Rng::mix(seed, 2));
  Rng mask_rng(Rng::mix(seed, 3));

  for (int u = 0; u < g.num_nodes; ++u) {
    for (int v = u + 1; v < g.num_nodes; ++v) {
      const double p = block_of[u] == block_of[v] ? cfg.p_in : cfg.p_out;
      if (p >= 1.0 || (p > 0.0 && edge_rng.bernoulli(p))) g.edges.emplace_back(u, v);
    }
  }

  // Class means: random directions, orthogonalized against each other when
  // the feature dimension allows it, so classes stay separable.
  Mat class_means(num_classes, cfg.feature_dim);
  for (int c = 0; c < num_classes; ++c) {
    Vec dir(cfg.feature_dim);
    for (int k = 0; k < cfg.feature_dim; ++k) dir[k] = feat_rng.normal();
    if (c < cfg.feature_dim) {
      for (int prev = 0; prev < c; ++prev) {
        const Vec q = class_means.row(prev).transpose() / cfg.mean_scale;
        dir -= q.dot(dir) * q;
      }
    }
    const double norm = dir.norm();
    if (norm > 0) dir /= norm;
    class_means.row(c) = dir.transpose() * cfg.mean_scale;
  }
  Mat block_means(num_blocks, cfg.feature_dim);
  for (int b = 0; b < num_blocks; ++b) {
    for (int k = 0; k < cfg.feature_dim; ++k)
      block_means(b, k) = class_means(cfg.blocks[b].class_id, k) +
                          cfg.block_jitter * feat_rng.normal();
  }
  g.features.resize(g.num_nodes, cfg.feature_dim);
  for (int v = 0; v < g.num_nodes; ++v)
    for (int k = 0; k < cfg.feature_dim; ++k)
      g.features(v, k) = block_means(block_of[v], k) + cfg.noise * feat_rng.normal();

  // Per-block shuffled split keeps every mask represented in every block.
  for (int b = 0, start = 0; b < num_blocks; start += cfg.blocks[b].size, ++b) {
    std::vector<int> ids(cfg.blocks[b].size);
    std::iota(ids.begin(), ids.end(), start);
    shuffle(ids, mask_rng);
    const int n_train = static_cast<int>(cfg.train_frac * ids.size());
    const int n_val = static_cast<int>(cfg.val_frac * ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (static_cast<int>(i) < n_train)
        g.masks.train.push_back(ids[i]);
      else if (static_cast<int>(i) < n_train + n_val)
        g.masks.val.push_back(ids[i]);
      else
        g.masks.test.push_back(ids[i]);
    }
  }
  std::sort(g.masks.train.begin(), g.masks.train.end());
  std::sort(g.masks.val.begin(), g.masks.val.end());
  std::sort(g.masks.test.begin(), g.masks.test.end());

  g.validate();
  return g;
}

inline Graph sbm_generate(const std::vector<SbmBlock>& blocks, double p_in,
                          double p_out, int feature_dim, std::uint64_t seed) {
  SbmConfig cfg;
  cfg.blocks = blocks;
  cfg.p_in = p_in;
  cfg.p_out = p_out;
  cfg.feature_dim = feature_dim;
  return sbm_generate(cfg, seed);
}

}  // namespace fgu

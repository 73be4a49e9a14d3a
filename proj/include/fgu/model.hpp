#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgu/graph.hpp"
#include "fgu/rng.hpp"

namespace fgu {

enum class Backbone { kGcn, kSgc };

inline const char* backbone_name(Backbone b) {
  return b == Backbone::kGcn ? "gcn" : "sgc";
}

inline Backbone backbone_from_name(const std::string& s) {
  if (s == "gcn") return Backbone::kGcn;
  if (s == "sgc") return Backbone::kSgc;
  throw std::invalid_argument("unknown backbone: " + s);
}

struct NamedTensor {
  std::string name;
  Mat value;
};

// Parameters of one GNN. GCN holds w1 [d_in x hidden] and w2 [hidden x C];
// SGC holds w [d_in x C] plus a propagation depth.
struct ModelParams {
  Backbone backbone = Backbone::kGcn;
  int propagation_depth = 2;  // SGC only
  std::vector<NamedTensor> tensors;

  const Mat& tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t.value;
    throw std::invalid_argument("model has no tensor named " + name);
  }
  Mat& tensor(const std::string& name) {
    return const_cast<Mat&>(static_cast<const ModelParams*>(this)->tensor(name));
  }

  int input_dim() const { return static_cast<int>(tensors.front().value.rows()); }
  int num_classes() const { return static_cast<int>(tensors.back().value.cols()); }
  int hidden_dim() const {
    return backbone == Backbone::kGcn ? static_cast<int>(tensor("w1").cols()) : 0;
  }

  bool same_layout(const ModelParams& other) const {
    if (backbone != other.backbone || tensors.size() != other.tensors.size())
      return false;
    if (backbone == Backbone::kSgc && propagation_depth != other.propagation_depth)
      return false;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (tensors[i].name != other.tensors[i].name ||
          tensors[i].value.rows() != other.tensors[i].value.rows() ||
          tensors[i].value.cols() != other.tensors[i].value.cols())
        return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.value.allFinite()) return false;
    return true;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.value.size());
    return n;
  }
};

namespace detail {

inline Mat glorot_uniform(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
  return m;
}

}  // namespace detail

inline ModelParams init_params(Backbone backbone, int d_in, int hidden, int num_classes,
                               std::uint64_t seed, int propagation_depth = 2) {
  if (d_in < 1 || num_classes < 1)
    throw std::invalid_argument("init_params: dimensions must be positive");
  Rng rng(Rng::mix(seed, 0x6d6f64656cull));
  ModelParams p;
  p.backbone = backbone;
  p.propagation_depth = propagation_depth;
  if (backbone == Backbone::kGcn) {
    if (hidden < 1)
      throw std::invalid_argument("init_params: gcn hidden size must be positive");
    p.tensors.push_back({"w1", detail::glorot_uniform(d_in, hidden, rng)});
    p.tensors.push_back({"w2", detail::glorot_uniform(hidden, num_classes, rng)});
  } else {
    if (propagation_depth < 1)
      throw std::invalid_argument("init_params: sgc depth must be positive");
    p.tensors.push_back({"w", detail::glorot_uniform(d_in, num_classes, rng)});
  }
  return p;
}

// Checkpoints: "<base>.json" manifest plus "<base>.bin", a concatenation of
// the tensors as little-endian float64 in row-major order. Offsets count
// float64 values, not bytes.
inline void save_checkpoint(const ModelParams& p, const std::string& base_path) {
  static_assert(std::endian::native == std::endian::little);
  nlohmann::json manifest;
  manifest["backbone"] = backbone_name(p.backbone);
  if (p.backbone == Backbone::kSgc) manifest["propagation_depth"] = p.propagation_depth;
  auto tensors = nlohmann::json::array();
  std::ofstream blob(base_path + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write checkpoint blob: " + base_path + ".bin");
  std::size_t offset = 0;
  for (const auto& t : p.tensors) {
    tensors.push_back({{"name", t.name},
                       {"shape", {t.value.rows(), t.value.cols()}},
                       {"offset", offset}});
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
        const double v = t.value(i, j);
        blob.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
    }
    offset += static_cast<std::size_t>(t.value.size());
  }
  manifest["tensors"] = std::move(tensors);
  std::ofstream out(base_path + ".json");
  if (!out) throw std::runtime_error("cannot write checkpoint manifest: " + base_path + ".json");
  out << manifest.dump(2) << '\n';
}

inline ModelParams load_checkpoint(const std::string& base_path) {
  std::ifstream in(base_path + ".json");
  if (!in) throw std::runtime_error("cannot open checkpoint manifest: " + base_path + ".json");
  nlohmann::json manifest;
  in >> manifest;
  ModelParams p;
  p.backbone = backbone_from_name(manifest.at("backbone").get<std::string>());
  if (manifest.contains("propagation_depth"))
    p.propagation_depth = manifest["propagation_depth"].get<int>();
  std::ifstream blob(base_path + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("cannot open checkpoint blob: " + base_path + ".bin");
  for (const auto& t : manifest.at("tensors")) {
    const auto rows = t.at("shape")[0].get<Eigen::Index>();
    const auto cols = t.at("shape")[1].get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::size_t>();
    blob.seekg(static_cast<std::streamoff>(offset * sizeof(double)));
    Mat value(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        double v;
        blob.read(reinterpret_cast<char*>(&v), sizeof(double));
        if (!blob) throw std::runtime_error("checkpoint blob truncated: " + base_path + ".bin");
        value(i, j) = v;
      }
    }
    p.tensors.push_back({t.at("name").get<std::string>(), std::move(value)});
  }
  return p;
}

inline bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& x = a.tensors[i].value;
    const auto& y = b.tensors[i].value;
    for (Eigen::Index k = 0; k < x.size(); ++k)
      if (x.data()[k] != y.data()[k]) return false;
  }
  return true;
}

}  // namespace fgu

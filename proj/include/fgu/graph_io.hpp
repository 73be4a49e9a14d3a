#pragma once

#include <bit>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fgu/graph.hpp"

namespace fgu {

static_assert(std::endian::native == std::endian::little,
              "graph blobs are little-endian files mapped directly to doubles");

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<int> parse_int_array(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw LoadError(what + ": expected an array");
  std::vector<int> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number_integer()) throw LoadError(what + ": non-integer entry");
    out.push_back(e.get<int>());
  }
  return out;
}

inline std::vector<double> read_blob(const std::filesystem::path& path,
                                     std::size_t expected_values) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("feature blob missing: " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expected_values * sizeof(double))
    throw LoadError("feature blob " + path.string() + ": size " +
                    std::to_string(bytes) + " bytes, expected " +
                    std::to_string(expected_values * sizeof(double)));
  in.seekg(0);
  std::vector<double> values(expected_values);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw LoadError("feature blob " + path.string() + ": short read");
  return values;
}

}  // namespace detail

// Graph file format: a JSON document with num_nodes / num_features /
// num_classes, an edge array of [u,v] pairs with u < v, labels, masks and
// features either inline (row-major) or in a sibling little-endian float64
// blob referenced by relative path.
inline Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open graph file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed JSON in " + path + ": " + e.what());
  }
  for (const char* field : {"num_nodes", "num_features", "num_classes",
                            "edges", "labels", "masks", "features"}) {
    if (!j.contains(field))
      throw LoadError(path + ": missing field \"" + field + "\"");
  }

  Graph g;
  g.num_nodes = j["num_nodes"].get<int>();
  const int d = j["num_features"].get<int>();
  g.num_classes = j["num_classes"].get<int>();
  if (g.num_nodes < 1) throw LoadError(path + ": num_nodes must be >= 1");
  if (d < 1) throw LoadError(path + ": num_features must be >= 1");
  if (g.num_classes < 1) throw LoadError(path + ": num_classes must be >= 1");

  g.labels = detail::parse_int_array(j["labels"], path + ": labels");
  if (static_cast<int>(g.labels.size()) != g.num_nodes)
    throw LoadError(path + ": labels has " + std::to_string(g.labels.size()) +
                    " entries, header says " + std::to_string(g.num_nodes));
  for (std::size_t i = 0; i < g.labels.size(); ++i)
    if (g.labels[i] < 0 || g.labels[i] >= g.num_classes)
      throw LoadError(path + ": label of node " + std::to_string(i) +
                      " out of range: " + std::to_string(g.labels[i]));

  if (!j["edges"].is_array()) throw LoadError(path + ": edges must be an array");
  std::set<Edge> seen;
  std::size_t index = 0;
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 2)
      throw LoadError(path + ": edge " + std::to_string(index) +
                      ": expected [u,v] pair");
    const int u = e[0].get<int>(), v = e[1].get<int>();
    if (u == v)
      throw LoadError(path + ": edge " + std::to_string(index) + ": self-loop (" +
                      std::to_string(u) + "," + std::to_string(v) + ")");
    if (u < 0 || v < 0 || u >= g.num_nodes || v >= g.num_nodes)
      throw LoadError(path + ": edge " + std::to_string(index) +
                      ": endpoint out of range (" + std::to_string(u) + "," +
                      std::to_string(v) + ")");
    if (u >= v)
      throw LoadError(path + ": edge " + std::to_string(index) +
                      ": pairs must satisfy u < v");
    if (!seen.insert({u, v}).second)
      throw LoadError(path + ": edge " + std::to_string(index) + ": duplicate (" +
                      std::to_string(u) + "," + std::to_string(v) + ")");
    g.edges.emplace_back(u, v);
    ++index;
  }
  std::sort(g.edges.begin(), g.edges.end());

  const auto& masks = j["masks"];
  for (const char* m : {"train", "val", "test"})
    if (!masks.contains(m))
      throw LoadError(path + ": masks missing \"" + m + "\"");
  g.masks.train = detail::parse_int_array(masks["train"], path + ": train mask");
  g.masks.val = detail::parse_int_array(masks["val"], path + ": val mask");
  g.masks.test = detail::parse_int_array(masks["test"], path + ": test mask");
  std::sort(g.masks.train.begin(), g.masks.train.end());
  std::sort(g.masks.val.begin(), g.masks.val.end());
  std::sort(g.masks.test.begin(), g.masks.test.end());

  const auto& feats = j["features"];
  g.features.resize(g.num_nodes, d);
  if (feats.contains("inline")) {
    const auto& rows = feats["inline"];
    if (!rows.is_array() || static_cast<int>(rows.size()) != g.num_nodes)
      throw LoadError(path + ": inline features must have num_nodes rows");
    for (int i = 0; i < g.num_nodes; ++i) {
      const auto& row = rows[i];
      if (!row.is_array() || static_cast<int>(row.size()) != d)
        throw LoadError(path + ": feature row " + std::to_string(i) +
                        " has wrong width");
      for (int c = 0; c < d; ++c) g.features(i, c) = row[c].get<double>();
    }
  } else if (feats.contains("blob")) {
    const auto blob_path = std::filesystem::path(path).parent_path() /
                           feats["blob"].get<std::string>();
    const auto values = detail::read_blob(
        blob_path, static_cast<std::size_t>(g.num_nodes) * d);
    for (int i = 0; i < g.num_nodes; ++i)
      for (int c = 0; c < d; ++c)
        g.features(i, c) = values[static_cast<std::size_t>(i) * d + c];
  } else {
    throw LoadError(path + ": features must carry \"inline\" or \"blob\"");
  }

  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw LoadError(path + ": " + e.what());
  }
  return g;
}

// Writes the JSON document; features go to a sibling "<stem>.features.bin"
// blob when as_blob is set, inline otherwise.
inline void save_graph(const Graph& g, const std::string& path, bool as_blob = false) {
  nlohmann::json j;
  j["num_nodes"] = g.num_nodes;
  j["num_features"] = g.feature_dim();
  j["num_classes"] = g.num_classes;
  auto edges = nlohmann::json::array();
  for (const auto& [u, v] : g.edges) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  j["labels"] = g.labels;
  j["masks"] = {{"train", g.masks.train}, {"val", g.masks.val}, {"test", g.masks.test}};
  if (as_blob) {
    const auto p = std::filesystem::path(path);
    const auto blob_name = p.stem().string() + ".features.bin";
    std::ofstream blob(p.parent_path() / blob_name, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot write feature blob next to " + path);
    std::vector<double> row(g.feature_dim());
    for (int i = 0; i < g.num_nodes; ++i) {
      for (int c = 0; c < g.feature_dim(); ++c) row[c] = g.features(i, c);
      blob.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    j["features"] = {{"blob", blob_name}};
  } else {
    auto rows = nlohmann::json::array();
    for (int i = 0; i < g.num_nodes; ++i) {
      auto row = nlohmann::json::array();
      for (int c = 0; c < g.feature_dim(); ++c) row.push_back(g.features(i, c));
      rows.push_back(std::move(row));
    }
    j["features"] = {{"inline", std::move(rows)}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace fgu

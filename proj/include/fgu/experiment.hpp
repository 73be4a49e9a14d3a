#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgu/federation.hpp"
#include "fgu/graph_io.hpp"
#include "fgu/louvain.hpp"
#include "fgu/metrics.hpp"
#include "fgu/pipeline.hpp"
#include "fgu/sbm.hpp"
#include "fgu/schema.hpp"

namespace fgu {

// Raised when a referenced input file does not exist; the CLI maps it to
// exit code 2.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  std::string kind = "sbm";  // "file" or "sbm"
  std::string path;          // file datasets
  SbmConfig sbm;             // generated datasets
};

struct UnlearnSpec {
  std::string mode = "meta";   // "meta" or "client"
  std::string level = "node";  // node | edge | feature (meta only)
  double ratio = -1.0;         // <0: default 0.1 meta / 0.2 client
  std::vector<int> target_clients;         // empty: sampled from request seed
  std::vector<MetaRemoval> explicit_removals;  // overrides sampling if set

  double effective_ratio() const {
    if (ratio >= 0) return ratio;
    return mode == "meta" ? 0.1 : 0.2;
  }
};

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t train = 2;
  std::uint64_t request = 3;
};

struct EvalToggles {
  bool mia = true;
  bool distance = true;
  bool csv = false;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  int clients = 5;
  Backbone backbone = Backbone::kGcn;
  int hidden = 64;
  int propagation_depth = 2;
  int rounds = 10;
  int local_epochs = 3;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  Weighting weighting = Weighting::kTrainNodes;
  UnlearnSpec unlearn;
  double tau = 0.8;
  int meta_unlearn_epochs = 1;
  double unlearn_lr = 1e-3;
  EmbeddingSpace embedding_space = EmbeddingSpace::kHidden;
  AdvConfig adv;
  DistillConfig distill;
  double attack_ratio = 0.3;
  EvalToggles eval;
  Seeds seeds;
  int workers = 1;

  void validate(bool needs_federation) const {
    if (dataset.kind != "file" && dataset.kind != "sbm")
      throw std::invalid_argument("config: dataset.kind must be file or sbm");
    if (dataset.kind == "file" && dataset.path.empty())
      throw std::invalid_argument("config: dataset.path required for file datasets");
    if (clients < 1) throw std::invalid_argument("config: clients must be >= 1");
    if (needs_federation && clients < 2)
      throw std::invalid_argument("config: federated runs need at least 2 clients");
    if (hidden < 1) throw std::invalid_argument("config: hidden must be >= 1");
    if (rounds < 0 || local_epochs < 0)
      throw std::invalid_argument("config: negative training schedule");
    if (unlearn.mode != "meta" && unlearn.mode != "client")
      throw std::invalid_argument("config: unlearn.mode must be meta or client");
    if (unlearn.level != "node" && unlearn.level != "edge" && unlearn.level != "feature")
      throw std::invalid_argument("config: unlearn.level must be node, edge or feature");
    if (unlearn.ratio >= 0 && (unlearn.ratio <= 0.0 || unlearn.ratio > 1.0))
      throw std::invalid_argument("config: unlearn.ratio must lie in (0,1]");
    if (attack_ratio < 0 || attack_ratio > 1)
      throw std::invalid_argument("config: attack.ratio must lie in [0,1]");
    adv.validate();
    distill.validate();
  }
};

// ---------------------------------------------------------------------------
// Config (de)serialization with full defaulting. parse_config accepts a
// partial document; to_json echoes every effective value.

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j[key].get<T>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    cfg.dataset.kind = detail::get_or<std::string>(d, "kind", "sbm");
    cfg.dataset.path = detail::get_or<std::string>(d, "path", "");
    auto& s = cfg.dataset.sbm;
    if (d.contains("blocks")) {
      s.blocks.clear();
      for (const auto& b : d["blocks"])
        s.blocks.push_back({b[0].get<int>(), b[1].get<int>()});
    }
    s.p_in = detail::get_or(d, "p_in", s.p_in);
    s.p_out = detail::get_or(d, "p_out", s.p_out);
    s.feature_dim = detail::get_or(d, "feature_dim", s.feature_dim);
    s.mean_scale = detail::get_or(d, "mean_scale", s.mean_scale);
    s.block_jitter = detail::get_or(d, "block_jitter", s.block_jitter);
    s.noise = detail::get_or(d, "noise", s.noise);
    s.train_frac = detail::get_or(d, "train_frac", s.train_frac);
    s.val_frac = detail::get_or(d, "val_frac", s.val_frac);
  }
  cfg.clients = detail::get_or(j, "clients", cfg.clients);
  if (j.contains("backbone"))
    cfg.backbone = backbone_from_name(j["backbone"].get<std::string>());
  cfg.hidden = detail::get_or(j, "hidden", cfg.hidden);
  cfg.propagation_depth = detail::get_or(j, "propagation_depth", cfg.propagation_depth);
  cfg.rounds = detail::get_or(j, "rounds", cfg.rounds);
  cfg.local_epochs = detail::get_or(j, "local_epochs", cfg.local_epochs);
  cfg.lr = detail::get_or(j, "lr", cfg.lr);
  if (j.contains("optimizer"))
    cfg.optimizer = optimizer_from_name(j["optimizer"].get<std::string>());
  if (j.contains("weighting"))
    cfg.weighting = j["weighting"].get<std::string>() == "total_nodes"
                        ? Weighting::kTotalNodes
                        : Weighting::kTrainNodes;
  if (j.contains("unlearn")) {
    const auto& u = j["unlearn"];
    cfg.unlearn.mode = detail::get_or<std::string>(u, "mode", cfg.unlearn.mode);
    cfg.unlearn.level = detail::get_or<std::string>(u, "level", cfg.unlearn.level);
    cfg.unlearn.ratio = detail::get_or(u, "ratio", cfg.unlearn.ratio);
    if (u.contains("target_clients"))
      cfg.unlearn.target_clients = u["target_clients"].get<std::vector<int>>();
    if (u.contains("explicit_removals")) {
      for (const auto& r : u["explicit_removals"]) {
        MetaRemoval removal;
        removal.client_id = r.at("client_id").get<int>();
        if (r.contains("removed_nodes"))
          removal.removed_nodes = r["removed_nodes"].get<std::vector<int>>();
        if (r.contains("removed_edges"))
          for (const auto& e : r["removed_edges"])
            removal.removed_edges.push_back({e[0].get<int>(), e[1].get<int>()});
        if (r.contains("feature_masked_nodes"))
          removal.feature_masked_nodes =
              r["feature_masked_nodes"].get<std::vector<int>>();
        cfg.unlearn.explicit_removals.push_back(std::move(removal));
      }
    }
  }
  if (j.contains("page")) {
    const auto& p = j["page"];
    cfg.tau = detail::get_or(p, "tau", cfg.tau);
    cfg.meta_unlearn_epochs = detail::get_or(p, "meta_epochs", cfg.meta_unlearn_epochs);
    cfg.unlearn_lr = detail::get_or(p, "unlearn_lr", cfg.unlearn_lr);
    if (p.contains("embedding_space"))
      cfg.embedding_space = p["embedding_space"].get<std::string>() == "logits"
                                ? EmbeddingSpace::kLogits
                                : EmbeddingSpace::kHidden;
    if (p.contains("adv")) {
      const auto& a = p["adv"];
      cfg.adv.nodes = detail::get_or(a, "nodes", cfg.adv.nodes);
      cfg.adv.lambda = detail::get_or(a, "lambda", cfg.adv.lambda);
      cfg.adv.eps_x = detail::get_or(a, "eps_x", cfg.adv.eps_x);
      cfg.adv.k_flip = detail::get_or(a, "k_flip", cfg.adv.k_flip);
      cfg.adv.max_iters = detail::get_or(a, "max_iters", cfg.adv.max_iters);
      cfg.adv.tol = detail::get_or(a, "tol", cfg.adv.tol);
      cfg.adv.patience = detail::get_or(a, "patience", cfg.adv.patience);
      cfg.adv.lr = detail::get_or(a, "lr", cfg.adv.lr);
      cfg.adv.raw_ce = detail::get_or(a, "raw_ce", cfg.adv.raw_ce);
      cfg.adv.topk_on_logits =
          detail::get_or(a, "topk_on_logits", cfg.adv.topk_on_logits);
    }
    if (p.contains("distill")) {
      const auto& d = p["distill"];
      cfg.distill.alpha = detail::get_or(d, "alpha", cfg.distill.alpha);
      cfg.distill.epochs = detail::get_or(d, "epochs", cfg.distill.epochs);
      cfg.distill.lr = detail::get_or(d, "lr", cfg.distill.lr);
      cfg.distill.hard_label_pos =
          detail::get_or(d, "hard_label_pos", cfg.distill.hard_label_pos);
    }
  }
  if (j.contains("attack"))
    cfg.attack_ratio = detail::get_or(j["attack"], "ratio", cfg.attack_ratio);
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    cfg.eval.mia = detail::get_or(e, "mia", cfg.eval.mia);
    cfg.eval.distance = detail::get_or(e, "distance", cfg.eval.distance);
    cfg.eval.csv = detail::get_or(e, "csv", cfg.eval.csv);
  }
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    cfg.seeds.data = detail::get_or<std::uint64_t>(s, "data", cfg.seeds.data);
    cfg.seeds.train = detail::get_or<std::uint64_t>(s, "train", cfg.seeds.train);
    cfg.seeds.request = detail::get_or<std::uint64_t>(s, "request", cfg.seeds.request);
  }
  cfg.workers = detail::get_or(j, "workers", cfg.workers);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw MissingInputError("config file not found: " + path);
  std::ifstream in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed config JSON in " + path + ": " + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  nlohmann::json d;
  d["kind"] = cfg.dataset.kind;
  if (!cfg.dataset.path.empty()) d["path"] = cfg.dataset.path;
  if (cfg.dataset.kind == "sbm") {
    auto blocks = nlohmann::json::array();
    for (const auto& b : cfg.dataset.sbm.blocks)
      blocks.push_back({b.size, b.class_id});
    d["blocks"] = std::move(blocks);
    d["p_in"] = cfg.dataset.sbm.p_in;
    d["p_out"] = cfg.dataset.sbm.p_out;
    d["feature_dim"] = cfg.dataset.sbm.feature_dim;
    d["mean_scale"] = cfg.dataset.sbm.mean_scale;
    d["block_jitter"] = cfg.dataset.sbm.block_jitter;
    d["noise"] = cfg.dataset.sbm.noise;
    d["train_frac"] = cfg.dataset.sbm.train_frac;
    d["val_frac"] = cfg.dataset.sbm.val_frac;
  }
  j["dataset"] = std::move(d);
  j["clients"] = cfg.clients;
  j["backbone"] = backbone_name(cfg.backbone);
  j["hidden"] = cfg.hidden;
  j["propagation_depth"] = cfg.propagation_depth;
  j["rounds"] = cfg.rounds;
  j["local_epochs"] = cfg.local_epochs;
  j["lr"] = cfg.lr;
  j["optimizer"] = cfg.optimizer == Optimizer::kAdam ? "adam" : "sgd";
  j["weighting"] =
      cfg.weighting == Weighting::kTrainNodes ? "train_nodes" : "total_nodes";
  nlohmann::json u;
  u["mode"] = cfg.unlearn.mode;
  u["level"] = cfg.unlearn.level;
  u["ratio"] = cfg.unlearn.effective_ratio();
  u["target_clients"] = cfg.unlearn.target_clients;
  j["unlearn"] = std::move(u);
  nlohmann::json p;
  p["tau"] = cfg.tau;
  p["meta_epochs"] = cfg.meta_unlearn_epochs;
  p["unlearn_lr"] = cfg.unlearn_lr;
  p["embedding_space"] =
      cfg.embedding_space == EmbeddingSpace::kHidden ? "hidden" : "logits";
  p["adv"] = {{"nodes", cfg.adv.nodes},     {"lambda", cfg.adv.lambda},
              {"eps_x", cfg.adv.eps_x},     {"k_flip", cfg.adv.k_flip},
              {"max_iters", cfg.adv.max_iters}, {"tol", cfg.adv.tol},
              {"patience", cfg.adv.patience},   {"lr", cfg.adv.lr},
              {"raw_ce", cfg.adv.raw_ce},
              {"topk_on_logits", cfg.adv.topk_on_logits}};
  p["distill"] = {{"alpha", cfg.distill.alpha},
                  {"epochs", cfg.distill.epochs},
                  {"lr", cfg.distill.lr},
                  {"hard_label_pos", cfg.distill.hard_label_pos}};
  j["page"] = std::move(p);
  j["attack"] = {{"ratio", cfg.attack_ratio}};
  j["eval"] = {{"mia", cfg.eval.mia},
               {"distance", cfg.eval.distance},
               {"csv", cfg.eval.csv}};
  j["seeds"] = {{"data", cfg.seeds.data},
                {"train", cfg.seeds.train},
                {"request", cfg.seeds.request}};
  j["workers"] = cfg.workers;
  return j;
}

// ---------------------------------------------------------------------------
// Dataset and federation assembly.

inline Graph build_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == "file") {
    if (!std::filesystem::exists(cfg.dataset.path))
      throw MissingInputError("dataset file not found: " + cfg.dataset.path);
    return load_graph(cfg.dataset.path);
  }
  SbmConfig sbm = cfg.dataset.sbm;
  if (sbm.blocks.empty()) {
    // Default desk-scale corpus: 500 nodes, 5 classes spread over 25 blocks
    // so every client ends up holding most classes.
    for (int b = 0; b < 25; ++b) sbm.blocks.push_back({20, b % 5});
    sbm.p_in = 0.25;
    sbm.p_out = 0.004;
    sbm.feature_dim = 16;
  }
  return sbm_generate(sbm, cfg.seeds.data);
}

inline std::vector<Graph> build_clients(const ExperimentConfig& cfg, const Graph& g) {
  const Partition part = louvain_partition(g, cfg.clients, cfg.seeds.data);
  std::vector<Graph> clients;
  clients.reserve(cfg.clients);
  for (int c = 0; c < cfg.clients; ++c) clients.push_back(client_subgraph(g, part, c));
  return clients;
}

inline FederationConfig federation_config(const ExperimentConfig& cfg,
                                          const std::string& history_dir = "") {
  FederationConfig fed;
  fed.rounds = cfg.rounds;
  fed.local_epochs = cfg.local_epochs;
  fed.lr = cfg.lr;
  fed.optimizer = cfg.optimizer;
  fed.weighting = cfg.weighting;
  fed.workers = cfg.workers;
  fed.history_dir = history_dir;
  return fed;
}

inline PageConfig page_config(const ExperimentConfig& cfg) {
  PageConfig page;
  page.tau = cfg.tau;
  page.unlearn.epochs = cfg.meta_unlearn_epochs;
  page.unlearn.lr = cfg.unlearn_lr;
  page.unlearn.optimizer = cfg.optimizer;
  page.unlearn.space = cfg.embedding_space;
  page.adv = cfg.adv;
  page.adv.seed = Rng::mix(cfg.seeds.request, 0xadu);
  page.distill = cfg.distill;
  page.distill.optimizer = cfg.optimizer;
  page.noise_seed = Rng::mix(cfg.seeds.request, 0x901eu);
  page.space = cfg.embedding_space;
  return page;
}

// Builds the unlearn request: explicit lists when provided, otherwise
// sampled at the configured ratio with the request seed.
inline UnlearnRequest build_request(const ExperimentConfig& cfg,
                                    const std::vector<Graph>& clients) {
  UnlearnRequest request;
  const double ratio = cfg.unlearn.effective_ratio();
  Rng rng(Rng::mix(cfg.seeds.request, 0x7e9u));
  if (cfg.unlearn.mode == "client") {
    request.kind = UnlearnRequest::Kind::kClient;
    if (!cfg.unlearn.target_clients.empty()) {
      request.departing_clients = cfg.unlearn.target_clients;
    } else {
      const int k = static_cast<int>(clients.size());
      const int departures = std::min(
          k - 1, static_cast<int>(std::ceil(ratio * static_cast<double>(k))));
      std::vector<int> ids(k);
      std::iota(ids.begin(), ids.end(), 0);
      shuffle(ids, rng);
      request.departing_clients.assign(ids.begin(), ids.begin() + departures);
      std::sort(request.departing_clients.begin(), request.departing_clients.end());
    }
    return request;
  }

  request.kind = UnlearnRequest::Kind::kMeta;
  if (!cfg.unlearn.explicit_removals.empty()) {
    request.removals = cfg.unlearn.explicit_removals;
    return request;
  }
  std::vector<int> requesters = cfg.unlearn.target_clients;
  if (requesters.empty())
    requesters.push_back(rng.uniform_int(0, static_cast<int>(clients.size())));
  for (int u : requesters) {
    if (u < 0 || u >= static_cast<int>(clients.size()))
      throw std::invalid_argument("request: unknown client " + std::to_string(u));
    const Graph& g = clients[u];
    MetaRemoval removal;
    removal.client_id = u;
    if (cfg.unlearn.level == "edge") {
      const int count = static_cast<int>(
          std::ceil(ratio * static_cast<double>(g.edges.size())));
      std::vector<Edge> pool = g.edges;
      shuffle(pool, rng);
      removal.removed_edges.assign(pool.begin(), pool.begin() + count);
      std::sort(removal.removed_edges.begin(), removal.removed_edges.end());
    } else {
      const int count =
          static_cast<int>(std::ceil(ratio * static_cast<double>(g.num_nodes)));
      std::vector<int> pool(g.num_nodes);
      std::iota(pool.begin(), pool.end(), 0);
      shuffle(pool, rng);
      auto& target = cfg.unlearn.level == "node" ? removal.removed_nodes
                                                 : removal.feature_masked_nodes;
      target.assign(pool.begin(), pool.begin() + count);
      std::sort(target.begin(), target.end());
    }
    request.removals.push_back(std::move(removal));
  }
  return request;
}

// ---------------------------------------------------------------------------
// Accuracy blocks shared by the commands.

inline nlohmann::json accuracy_block(const ModelParams& params,
                                     const std::vector<Graph>& clients) {
  nlohmann::json out;
  auto per_client = nlohmann::json::array();
  double mean_local = 0.0;
  int with_test = 0;
  long long pooled_correct = 0, pooled_total = 0;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    const Graph& g = clients[c];
    if (g.masks.test.empty()) continue;
    const Mat logits = forward(params, g);
    int correct = 0;
    for (int v : g.masks.test)
      if (predicted_class(logits, v) == g.labels[v]) ++correct;
    const double acc =
        static_cast<double>(correct) / static_cast<double>(g.masks.test.size());
    per_client.push_back({{"client", static_cast<int>(c)}, {"accuracy", acc}});
    mean_local += acc;
    ++with_test;
    pooled_correct += correct;
    pooled_total += static_cast<long long>(g.masks.test.size());
  }
  out["per_client_test_accuracy"] = std::move(per_client);
  out["mean_local_test_accuracy"] = with_test ? mean_local / with_test : 0.0;
  out["global_test_accuracy"] =
      pooled_total ? static_cast<double>(pooled_correct) /
                         static_cast<double>(pooled_total)
                   : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Output directory handling.

struct RunOptions {
  std::string out_dir;
  bool overwrite = false;
};

namespace detail {

inline void prepare_out_dir(const RunOptions& opts, const char* marker) {
  namespace fs = std::filesystem;
  const fs::path dir(opts.out_dir);
  if (fs::exists(dir / marker) && !opts.overwrite)
    throw std::runtime_error("output " + (dir / marker).string() +
                             " already exists; pass --overwrite to replace it");
  fs::create_directories(dir);
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline void write_report(const nlohmann::json& report, const RunOptions& opts) {
  validate_schema(report, report_schema());
  write_json(report, (std::filesystem::path(opts.out_dir) / "report.json").string());
}

inline void write_csv(const nlohmann::json& report, const RunOptions& opts) {
  std::ofstream csv(std::filesystem::path(opts.out_dir) / "metrics.csv");
  csv << "run,phase,metric,value\n";
  const std::string run = report["command"].get<std::string>();
  std::function<void(const nlohmann::json&, const std::string&)> walk =
      [&](const nlohmann::json& node, const std::string& phase) {
        for (const auto& [key, value] : node.items()) {
          if (value.is_number()) {
            csv << run << ',' << phase << ',' << key << ',' << value.dump() << '\n';
          } else if (value.is_object()) {
            walk(value, phase.empty() ? key : phase + "." + key);
          }
        }
      };
  walk(report["metrics"], "");
}

inline nlohmann::json timings_json(const StageTimings& t) {
  return {{"prototype_sec", t.prototype_sec},
          {"adversarial_sec", t.adversarial_sec},
          {"distill_sec", t.distill_sec},
          {"total_sec", t.total_sec}};
}

inline nlohmann::json provenance_json(const std::vector<AdvProvenance>& prov) {
  auto arr = nlohmann::json::array();
  for (const auto& p : prov) {
    arr.push_back({{"client", p.client},
                   {"iterations", p.iterations},
                   {"initial_l_diff", p.initial_losses.diff},
                   {"final_l_diff", p.final_losses.diff},
                   {"final_l_reg", p.final_losses.reg},
                   {"final_l_adv", p.final_losses.adv}});
  }
  return arr;
}

inline nlohmann::json base_report(const char* command, const ExperimentConfig& cfg) {
  nlohmann::json report;
  report["schema_version"] = 1;
  report["command"] = command;
  report["seeds"] = {{"data", cfg.seeds.data},
                     {"train", cfg.seeds.train},
                     {"request", cfg.seeds.request}};
  report["config"] = config_to_json(cfg);
  report["timings_sec"] = nlohmann::json::object();
  return report;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each returns the report document it wrote.

inline nlohmann::json run_partition(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate(false);
  detail::prepare_out_dir(opts, "partition.json");
  const Graph g = build_dataset(cfg);
  const Partition part = louvain_partition(g, cfg.clients, cfg.seeds.data);
  namespace fs = std::filesystem;
  auto sizes = nlohmann::json::array();
  for (int c = 0; c < cfg.clients; ++c) {
    const Graph sub = client_subgraph(g, part, c);
    sizes.push_back(sub.num_nodes);
    save_graph(sub, (fs::path(opts.out_dir) /
                     ("client_" + std::to_string(c) + ".json"))
                        .string(),
               /*as_blob=*/g.feature_dim() > 64);
  }
  nlohmann::json pj;
  pj["num_clients"] = cfg.clients;
  pj["assignments"] = part.assignments;
  pj["client_sizes"] = sizes;
  detail::write_json(pj, (fs::path(opts.out_dir) / "partition.json").string());
  detail::write_json(config_to_json(cfg),
                     (fs::path(opts.out_dir) / "config.json").string());
  return pj;
}

inline nlohmann::json run_train(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate(true);
  detail::prepare_out_dir(opts, "report.json");
  namespace fs = std::filesystem;
  const Graph g = build_dataset(cfg);
  const auto clients = build_clients(cfg, g);
  auto state = make_federation(
      clients, cfg.backbone, cfg.hidden, cfg.seeds.train,
      federation_config(cfg, (fs::path(opts.out_dir) / "rounds").string()),
      cfg.propagation_depth);
  run_training(state, cfg.rounds);

  fs::create_directories(fs::path(opts.out_dir) / "checkpoints");
  save_checkpoint(state.global,
                  (fs::path(opts.out_dir) / "checkpoints" / "theta_o").string());
  for (int c = 0; c < state.num_clients(); ++c)
    save_checkpoint(state.client_params[c],
                    (fs::path(opts.out_dir) / "checkpoints" /
                     ("client_" + std::to_string(c)))
                        .string());

  nlohmann::json state_json;
  state_json["round"] = state.round;
  state_json["num_clients"] = state.num_clients();
  state_json["weights"] = state.weights();
  state_json["seeds"] = {{"data", cfg.seeds.data},
                         {"train", cfg.seeds.train},
                         {"request", cfg.seeds.request}};
  state_json["config"] = config_to_json(cfg);
  detail::write_json(state_json, (fs::path(opts.out_dir) / "state.json").string());

  nlohmann::json report = detail::base_report("train", cfg);
  report["metrics"] = {{"theta_o", accuracy_block(state.global, state.client_graphs)}};
  report["timings_sec"] = nlohmann::json::object();
  detail::write_json(config_to_json(cfg),
                     (fs::path(opts.out_dir) / "config.json").string());
  detail::write_report(report, opts);
  if (cfg.eval.csv) detail::write_csv(report, opts);
  return report;
}

struct UnlearnArtifacts {
  nlohmann::json report;
  UnlearnOutcome outcome;
  ModelParams theta_o;
  ModelParams theta_star;
};

// Shared by the unlearn and attack commands: train, build the request, run
// the pipeline (and optionally the retrain oracle), evaluate.
inline UnlearnArtifacts execute_unlearn(const ExperimentConfig& cfg,
                                        const std::string& mode,
                                        bool with_retrain_oracle) {
  const Graph full = build_dataset(cfg);
  const auto original_clients = build_clients(cfg, full);
  auto state = make_federation(original_clients, cfg.backbone, cfg.hidden,
                               cfg.seeds.train, federation_config(cfg),
                               cfg.propagation_depth);
  run_training(state, cfg.rounds);
  const ModelParams theta_o = state.global;
  const std::vector<ModelParams> pre_params = state.client_params;

  ExperimentConfig effective = cfg;
  effective.unlearn.mode = mode;
  const UnlearnRequest request = build_request(effective, original_clients);
  const PageConfig page = page_config(effective);

  UnlearnArtifacts art;
  art.theta_o = theta_o;
  art.outcome = mode == "meta" ? meta_unlearn_pipeline(state, request, page)
                               : client_unlearn_pipeline(state, request, page);

  detail::StageClock retrain_clock;
  if (with_retrain_oracle)
    art.theta_star =
        retrain_oracle(original_clients, request, cfg.backbone, cfg.hidden,
                       cfg.seeds.train, federation_config(cfg),
                       cfg.propagation_depth);
  const double retrain_sec = retrain_clock.seconds();

  // Evaluation graphs: the retained client graphs after the pipeline.
  const std::vector<Graph>& retained_graphs = state.client_graphs;

  nlohmann::json report = detail::base_report("unlearn", cfg);
  report["command"] = "unlearn";
  report["mode"] = mode;
  nlohmann::json metrics;
  metrics["theta_o"] = accuracy_block(theta_o, retained_graphs);
  metrics["theta_bar"] = accuracy_block(art.outcome.global_unlearned, retained_graphs);
  if (with_retrain_oracle) {
    metrics["theta_star"] = accuracy_block(art.theta_star, retained_graphs);
    const char* key = mode == "meta" ? "mean_local_test_accuracy"
                                     : "global_test_accuracy";
    const double gap = std::abs(metrics["theta_bar"][key].get<double>() -
                                metrics["theta_star"][key].get<double>());
    metrics["unlearn"] = {{"gap_points_vs_retrain", 100.0 * gap},
                          {"criterion_metric", key}};
  }

  // Membership inference on the forgotten data, probed on the pre-removal
  // graph of the requesting (or departing) client.
  if (cfg.eval.mia) {
    int probe_client = -1;
    std::vector<int> members;
    if (mode == "meta" && !request.removals.empty()) {
      probe_client = request.removals.front().client_id;
      const Graph& pre = original_clients[probe_client];
      std::set<int> removed(request.removals.front().removed_nodes.begin(),
                            request.removals.front().removed_nodes.end());
      for (int v : pre.masks.train)
        if (removed.count(v)) members.push_back(v);
    } else if (mode == "client" && !request.departing_clients.empty()) {
      probe_client = request.departing_clients.front();
      members = original_clients[probe_client].masks.train;
    }
    if (probe_client >= 0 && !members.empty() &&
        !original_clients[probe_client].masks.test.empty()) {
      const Graph& pre = original_clients[probe_client];
      const auto before = mia_attack(theta_o, members, pre.masks.test, pre);
      const auto after = mia_attack(art.outcome.global_unlearned, members,
                                    pre.masks.test, pre);
      metrics["mia"] = {{"probe_client", probe_client},
                        {"members", before.members},
                        {"non_members", before.non_members},
                        {"theta_o_auc", before.auc},
                        {"theta_o_accuracy", before.accuracy},
                        {"theta_o_threshold", before.threshold},
                        {"theta_bar_auc", after.auc},
                        {"theta_bar_accuracy", after.accuracy},
                        {"theta_bar_threshold", after.threshold}};
    } else {
      log::warn("mia evaluation skipped: no forgotten train nodes in the request");
    }
  }

  if (cfg.eval.distance && with_retrain_oracle) {
    const auto d = model_distance(art.outcome.global_unlearned, art.theta_star, full);
    const ModelParams random_model =
        init_params(cfg.backbone, full.feature_dim(), cfg.hidden, full.num_classes,
                    Rng::mix(cfg.seeds.train, 0xdead), cfg.propagation_depth);
    const auto dr = model_distance(random_model, art.theta_star, full);
    metrics["distance"] = {{"theta_bar_vs_retrain_l2", d.l2},
                           {"theta_bar_vs_retrain_agreement", d.agreement},
                           {"random_vs_retrain_agreement", dr.agreement}};
  }

  nlohmann::json req_json;
  req_json["kind"] = mode;
  if (mode == "meta") {
    auto arr = nlohmann::json::array();
    for (const auto& r : request.removals) {
      nlohmann::json rj;
      rj["client_id"] = r.client_id;
      rj["removed_nodes"] = r.removed_nodes;
      auto edges = nlohmann::json::array();
      for (const auto& [u, v] : r.removed_edges) edges.push_back({u, v});
      rj["removed_edges"] = std::move(edges);
      rj["feature_masked_nodes"] = r.feature_masked_nodes;
      arr.push_back(std::move(rj));
    }
    req_json["removals"] = std::move(arr);
    req_json["forgotten_origins"] = art.outcome.forgotten_origins;
  } else {
    req_json["departing_clients"] = request.departing_clients;
    req_json["retained_clients"] = art.outcome.retained_clients;
  }
  metrics["request"] = std::move(req_json);

  report["metrics"] = std::move(metrics);
  report["influenced_clients"] = art.outcome.influenced;
  report["excluded_clients"] = art.outcome.excluded_clients;
  report["adv_provenance"] = detail::provenance_json(art.outcome.adversarial);
  report["timings_sec"] = detail::timings_json(art.outcome.timings);
  report["timings_sec"]["retrain_sec"] = retrain_sec;
  art.report = std::move(report);
  return art;
}

inline nlohmann::json run_unlearn(const ExperimentConfig& cfg, const std::string& mode,
                                  const RunOptions& opts) {
  cfg.validate(true);
  if (mode != "meta" && mode != "client")
    throw std::invalid_argument("unlearn: mode must be meta or client");
  detail::prepare_out_dir(opts, "report.json");
  namespace fs = std::filesystem;

  UnlearnArtifacts art = execute_unlearn(cfg, mode, /*with_retrain_oracle=*/true);

  fs::create_directories(fs::path(opts.out_dir) / "checkpoints");
  save_checkpoint(art.theta_o,
                  (fs::path(opts.out_dir) / "checkpoints" / "theta_o").string());
  save_checkpoint(art.outcome.global_unlearned,
                  (fs::path(opts.out_dir) / "checkpoints" / "theta_bar").string());
  save_checkpoint(art.theta_star,
                  (fs::path(opts.out_dir) / "checkpoints" / "theta_star").string());
  fs::create_directories(fs::path(opts.out_dir) / "adv");
  for (std::size_t i = 0; i < art.outcome.adv_graphs.size(); ++i) {
    const auto& adv = art.outcome.adv_graphs[i];
    const int client = art.outcome.adversarial[i].client;
    save_graph(adv.as_graph(art.theta_o.num_classes()),
               (fs::path(opts.out_dir) / "adv" /
                ("adv_client_" + std::to_string(client) + ".json"))
                   .string());
    nlohmann::json prov;
    prov["client"] = client;
    prov["iterations"] = adv.iterations;
    prov["initial"] = {{"l_diff", adv.initial_losses.diff},
                       {"l_reg", adv.initial_losses.reg},
                       {"l_adv", adv.initial_losses.adv}};
    prov["final"] = {{"l_diff", adv.final_losses.diff},
                     {"l_reg", adv.final_losses.reg},
                     {"l_adv", adv.final_losses.adv}};
    prov["config"] = config_to_json(cfg)["page"]["adv"];
    auto flipped = nlohmann::json::array();
    for (const auto& [u, v] : adv.flipped) flipped.push_back({u, v});
    prov["flipped"] = std::move(flipped);
    detail::write_json(prov, (fs::path(opts.out_dir) / "adv" /
                              ("provenance_client_" + std::to_string(client) + ".json"))
                                 .string());
  }

  nlohmann::json outcome_json;
  outcome_json["influenced_clients"] = art.outcome.influenced;
  outcome_json["excluded_clients"] = art.outcome.excluded_clients;
  outcome_json["retained_clients"] = art.outcome.retained_clients;
  outcome_json["forgotten_origins"] = art.outcome.forgotten_origins;
  outcome_json["timings_sec"] = detail::timings_json(art.outcome.timings);
  outcome_json["config"] = config_to_json(cfg);
  detail::write_json(outcome_json,
                     (fs::path(opts.out_dir) / "outcome.json").string());
  detail::write_json(config_to_json(cfg),
                     (fs::path(opts.out_dir) / "config.json").string());
  detail::write_report(art.report, opts);
  if (cfg.eval.csv) detail::write_csv(art.report, opts);
  return art.report;
}

inline nlohmann::json run_attack(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate(true);
  detail::prepare_out_dir(opts, "report.json");
  namespace fs = std::filesystem;

  const Graph full = build_dataset(cfg);
  const auto clean_clients = build_clients(cfg, full);

  // Clean baseline.
  auto clean_state = make_federation(clean_clients, cfg.backbone, cfg.hidden,
                                     cfg.seeds.train, federation_config(cfg),
                                     cfg.propagation_depth);
  run_training(clean_state, cfg.rounds);
  const nlohmann::json clean_block =
      accuracy_block(clean_state.global, clean_clients);

  // Poison, train on the poisoned federation.
  std::vector<Graph> poisoned_clients = clean_clients;
  const auto injected =
      inject_edge_attack(poisoned_clients, cfg.attack_ratio, cfg.seeds.request);
  auto state = make_federation(poisoned_clients, cfg.backbone, cfg.hidden,
                               cfg.seeds.train, federation_config(cfg),
                               cfg.propagation_depth);
  run_training(state, cfg.rounds);
  const nlohmann::json poisoned_block =
      accuracy_block(state.global, poisoned_clients);

  // Unlearn the injected edges through an edge-level meta request.
  UnlearnRequest request;
  request.kind = UnlearnRequest::Kind::kMeta;
  for (std::size_t c = 0; c < injected.size(); ++c) {
    if (injected[c].empty()) continue;
    MetaRemoval removal;
    removal.client_id = static_cast<int>(c);
    removal.removed_edges = injected[c];
    request.removals.push_back(std::move(removal));
  }
  UnlearnOutcome outcome;
  if (!request.removals.empty())
    outcome = meta_unlearn_pipeline(state, request, page_config(cfg));
  else
    outcome.global_unlearned = state.global;
  const nlohmann::json post_block =
      accuracy_block(outcome.global_unlearned, state.client_graphs);

  nlohmann::json report = detail::base_report("attack", cfg);
  nlohmann::json metrics;
  metrics["clean"] = clean_block;
  metrics["poisoned"] = poisoned_block;
  metrics["post_unlearn"] = post_block;
  metrics["recovery_gap_points"] =
      100.0 * std::abs(clean_block["global_test_accuracy"].get<double>() -
                       post_block["global_test_accuracy"].get<double>());
  auto injected_json = nlohmann::json::array();
  for (std::size_t c = 0; c < injected.size(); ++c)
    for (const auto& [u, v] : injected[c])
      injected_json.push_back({static_cast<int>(c), u, v});
  metrics["request"] = {{"kind", "meta"},
                        {"level", "edge"},
                        {"injected_edges", std::move(injected_json)}};
  report["metrics"] = std::move(metrics);
  report["influenced_clients"] = outcome.influenced;
  report["excluded_clients"] = outcome.excluded_clients;
  report["adv_provenance"] = detail::provenance_json(outcome.adversarial);
  report["timings_sec"] = detail::timings_json(outcome.timings);
  detail::write_json(config_to_json(cfg),
                     (fs::path(opts.out_dir) / "config.json").string());
  detail::write_report(report, opts);
  if (cfg.eval.csv) detail::write_csv(report, opts);
  return report;
}

// Re-evaluates the checkpoints of a previous run against its own config.
inline nlohmann::json run_evaluate(const std::string& run_dir, const RunOptions& opts) {
  namespace fs = std::filesystem;
  const fs::path dir(run_dir);
  if (!fs::exists(dir / "config.json"))
    throw MissingInputError("no config.json under " + run_dir);
  std::ifstream in(dir / "config.json");
  nlohmann::json cfg_json;
  in >> cfg_json;
  const ExperimentConfig cfg = parse_config(cfg_json);
  cfg.validate(true);

  const Graph full = build_dataset(cfg);
  const auto clients = build_clients(cfg, full);

  nlohmann::json report = detail::base_report("evaluate", cfg);
  nlohmann::json metrics;
  for (const char* name : {"theta_o", "theta_bar", "theta_star"}) {
    const fs::path base = dir / "checkpoints" / name;
    if (!fs::exists(base.string() + ".json")) continue;
    const ModelParams params = load_checkpoint(base.string());
    metrics[name] = accuracy_block(params, clients);
  }
  if (metrics.empty())
    throw MissingInputError("no checkpoints under " + run_dir + "/checkpoints");
  report["metrics"] = std::move(metrics);
  report["timings_sec"] = nlohmann::json::object();

  RunOptions eval_opts = opts;
  if (eval_opts.out_dir.empty()) eval_opts.out_dir = run_dir;
  const fs::path out(eval_opts.out_dir);
  if (fs::exists(out / "evaluation.json") && !eval_opts.overwrite)
    throw std::runtime_error("output " + (out / "evaluation.json").string() +
                             " already exists; pass --overwrite to replace it");
  fs::create_directories(out);
  validate_schema(report, report_schema());
  detail::write_json(report, (out / "evaluation.json").string());
  return report;
}

}  // namespace fgu

// Command-line front end for the federated graph unlearning simulator.
// Subcommands: partition, train, unlearn, attack, evaluate.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fgu/experiment.hpp"
#include "fgu/log.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  bool overwrite = false;
  int workers = 0;  // 0: take the config's value
  long long seed_data = -1, seed_train = -1, seed_request = -1;
};

void add_common(CLI::App* cmd, CommonArgs* args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args->config_path,
                              "experiment config JSON (defaults apply per field)");
  if (config_required) opt->required();
  cmd->add_option("--out", args->out_dir, "output directory")->required();
  cmd->add_flag("--overwrite", args->overwrite,
                "replace existing outputs instead of refusing");
  cmd->add_option("--workers", args->workers,
                  "parallel client-training/distillation pool size");
  cmd->add_option("--seed-data", args->seed_data, "override the data seed");
  cmd->add_option("--seed-train", args->seed_train, "override the training seed");
  cmd->add_option("--seed-request", args->seed_request, "override the request seed");
}

fgu::ExperimentConfig resolve_config(const CommonArgs& args) {
  fgu::ExperimentConfig cfg = args.config_path.empty()
                                  ? fgu::parse_config(nlohmann::json::object())
                                  : fgu::load_config(args.config_path);
  if (args.workers > 0) cfg.workers = args.workers;
  if (args.seed_data >= 0) cfg.seeds.data = static_cast<std::uint64_t>(args.seed_data);
  if (args.seed_train >= 0)
    cfg.seeds.train = static_cast<std::uint64_t>(args.seed_train);
  if (args.seed_request >= 0)
    cfg.seeds.request = static_cast<std::uint64_t>(args.seed_request);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated graph unlearning simulator"};
  app.require_subcommand(1);

  CommonArgs partition_args, train_args, unlearn_args, attack_args;
  std::string unlearn_mode = "meta";
  std::string evaluate_dir;
  std::string evaluate_out;
  bool evaluate_overwrite = false;

  auto* cmd_partition =
      app.add_subcommand("partition", "split a graph into per-client files");
  add_common(cmd_partition, &partition_args);

  auto* cmd_train = app.add_subcommand("train", "run federated training");
  add_common(cmd_train, &train_args);

  auto* cmd_unlearn =
      app.add_subcommand("unlearn", "train, unlearn, retrain-oracle, evaluate");
  add_common(cmd_unlearn, &unlearn_args);
  cmd_unlearn->add_option("--mode", unlearn_mode, "meta or client")
      ->check(CLI::IsMember({"meta", "client"}));

  auto* cmd_attack = app.add_subcommand(
      "attack", "edge-poisoning attack, training and recovery via unlearning");
  add_common(cmd_attack, &attack_args);

  auto* cmd_evaluate =
      app.add_subcommand("evaluate", "recompute metrics for an existing run");
  cmd_evaluate->add_option("--run", evaluate_dir, "existing run directory")
      ->required();
  cmd_evaluate->add_option("--out", evaluate_out,
                           "where to write evaluation.json (default: the run dir)");
  cmd_evaluate->add_flag("--overwrite", evaluate_overwrite,
                         "replace an existing evaluation.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_partition->parsed()) {
      fgu::run_partition(resolve_config(partition_args),
                         {partition_args.out_dir, partition_args.overwrite});
    } else if (cmd_train->parsed()) {
      fgu::run_train(resolve_config(train_args),
                     {train_args.out_dir, train_args.overwrite});
    } else if (cmd_unlearn->parsed()) {
      fgu::run_unlearn(resolve_config(unlearn_args), unlearn_mode,
                       {unlearn_args.out_dir, unlearn_args.overwrite});
    } else if (cmd_attack->parsed()) {
      fgu::run_attack(resolve_config(attack_args),
                      {attack_args.out_dir, attack_args.overwrite});
    } else if (cmd_evaluate->parsed()) {
      fgu::run_evaluate(evaluate_dir, {evaluate_out, evaluate_overwrite});
    }
  } catch (const fgu::MissingInputError& e) {
    fgu::log::error(e.what());
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    fgu::log::error(e.what());
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

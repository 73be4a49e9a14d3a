#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fgu/adversarial.hpp"
#include "fgu/federation.hpp"
#include "fgu/gnn.hpp"
#include "fgu/parallel.hpp"

namespace fgu {

struct DistillConfig {
  double alpha = 1.0;  // weight of the negative term
  int epochs = 2;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  bool hard_label_pos = false;  // CE against true labels instead of soft KL
  std::vector<double>* loss_log = nullptr;

  void validate() const {
    if (alpha < 0) throw std::invalid_argument("distill: alpha must be >= 0");
    if (epochs < 0) throw std::invalid_argument("distill: negative epoch count");
  }
};

// Negative knowledge distillation for one influenced client. The student
// starts at the client's parameters; the positive teacher is the frozen
// client model on the local graph, the negative teacher the frozen
// unlearned model on the adversarial probe. Minimizes
//   L = L_pos + alpha * L_neg,
// L_pos a soft-target divergence over the local train nodes and L_neg the
// mean squared logit error over the probe nodes.
inline ModelParams distill(const ModelParams& client, const ModelParams& unlearned,
                           const Graph& local, const AdversarialGraph& adv,
                           const DistillConfig& cfg) {
  cfg.validate();
  if (!client.same_layout(unlearned))
    throw std::invalid_argument("distill: model layouts differ");
  if (adv.x_final.cols() != client.input_dim())
    throw std::invalid_argument("distill: probe feature dim mismatch");
  if (local.masks.train.empty())
    throw std::invalid_argument("distill: client has no train nodes");

  const Graph probe = adv.as_graph(client.num_classes());
  const auto prop_local = Propagator::from_graph(local);
  const auto prop_probe = Propagator::from_graph(probe);

  // Both teachers are frozen; precompute their outputs once.
  const Mat teacher_pos_probs =
      softmax_rows(run_forward(client, prop_local, local.features).logits);
  const Mat teacher_neg_logits =
      run_forward(unlearned, prop_probe, probe.features).logits;
  const std::vector<int> probe_nodes = adv.all_nodes();

  ModelParams student = client;
  AdamState adam = AdamState::like(student);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto fp_local = run_forward(student, prop_local, local.features);
    const LossGrad pos =
        cfg.hard_label_pos
            ? cross_entropy_hard(fp_local.logits, local.labels, local.masks.train)
            : kl_soft(fp_local.logits, teacher_pos_probs, local.masks.train);
    const auto fp_probe = run_forward(student, prop_probe, probe.features);
    const LossGrad neg = mse_vs_logits(fp_probe.logits, teacher_neg_logits);

    const double total = pos.value + cfg.alpha * neg.value;
    if (!std::isfinite(total))
      throw std::runtime_error("distill: non-finite loss at epoch " +
                               std::to_string(epoch));
    if (cfg.loss_log) cfg.loss_log->push_back(total);

    GradBundle grads = backward_logits(fp_local, pos.dlogits, false);
    const GradBundle neg_grads =
        backward_logits(fp_probe, Mat(cfg.alpha * neg.dlogits), false);
    for (std::size_t t = 0; t < grads.param_grads.size(); ++t)
      grads.param_grads[t].value += neg_grads.param_grads[t].value;

    student = cfg.optimizer == Optimizer::kAdam
                  ? adam_step(std::move(student), grads, cfg.lr, adam)
                  : sgd_step(std::move(student), grads, cfg.lr);
  }
  if (!student.all_finite())
    throw std::runtime_error("distill: non-finite parameters after update");
  return student;
}

// Runs distillation on every influenced client in place; everyone else and
// all graphs stay untouched.
inline void distill_round(FederationState& state, const std::vector<int>& influenced,
                          const ModelParams& unlearned, const AdversarialGraph& adv,
                          const DistillConfig& cfg) {
  for (int c : influenced)
    if (c < 0 || c >= state.num_clients())
      throw std::invalid_argument("distill_round: invalid client id " +
                                  std::to_string(c));
  parallel_for(static_cast<int>(influenced.size()), state.config.workers, [&](int i) {
    const int c = influenced[i];
    state.client_params[c] = distill(state.client_params[c], unlearned,
                                     state.client_graphs[c], adv, cfg);
  });
}

}  // namespace fgu

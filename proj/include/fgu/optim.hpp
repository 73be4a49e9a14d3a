#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fgu/model.hpp"

namespace fgu {

enum class Optimizer { kAdam, kSgd };

inline Optimizer optimizer_from_name(const std::string& s) {
  if (s == "adam") return Optimizer::kAdam;
  if (s == "sgd") return Optimizer::kSgd;
  throw std::invalid_argument("unknown optimizer: " + s);
}

// Gradients carried in the same named-tensor layout as ModelParams, plus
// optional input gradients when the caller asked for them.
struct GradBundle {
  std::vector<NamedTensor> param_grads;
  std::optional<Mat> feature_grad;    // N x d_in
  std::optional<Mat> adjacency_grad;  // N x N, dense inputs only

  bool all_finite() const {
    for (const auto& t : param_grads)
      if (!t.value.allFinite()) return false;
    if (feature_grad && !feature_grad->allFinite()) return false;
    if (adjacency_grad && !adjacency_grad->allFinite()) return false;
    return true;
  }
};

namespace detail {

inline void check_layout(const ModelParams& p, const GradBundle& g) {
  if (p.tensors.size() != g.param_grads.size())
    throw std::invalid_argument("optimizer: gradient layout mismatch");
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    if (p.tensors[i].name != g.param_grads[i].name ||
        p.tensors[i].value.rows() != g.param_grads[i].value.rows() ||
        p.tensors[i].value.cols() != g.param_grads[i].value.cols())
      throw std::invalid_argument("optimizer: gradient layout mismatch at tensor " +
                                  p.tensors[i].name);
  }
}

}  // namespace detail

inline ModelParams sgd_step(ModelParams p, const GradBundle& g, double lr) {
  detail::check_layout(p, g);
  for (std::size_t i = 0; i < p.tensors.size(); ++i)
    p.tensors[i].value -= lr * g.param_grads[i].value;
  return p;
}

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct AdamState {
  int step = 0;
  std::vector<Mat> m, v;

  static AdamState like(const ModelParams& p) {
    AdamState s;
    for (const auto& t : p.tensors) {
      s.m.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
      s.v.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
    }
    return s;
  }
};

inline ModelParams adam_step(ModelParams p, const GradBundle& g, double lr,
                             AdamState& state) {
  detail::check_layout(p, g);
  if (state.m.size() != p.tensors.size())
    throw std::invalid_argument("adam_step: state layout mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, state.step);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, state.step);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const Mat& grad = g.param_grads[i].value;
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * grad;
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * grad.cwiseProduct(grad);
    const Mat m_hat = state.m[i] / bc1;
    const Mat v_hat = state.v[i] / bc2;
    p.tensors[i].value.array() -=
        lr * m_hat.array() / (v_hat.array().sqrt() + kAdamEps);
  }
  return p;
}

// Adam over a single free matrix; used for the adversarial variables.
struct MatAdam {
  int step = 0;
  Mat m, v;

  MatAdam(Eigen::Index rows, Eigen::Index cols)
      : m(Mat::Zero(rows, cols)), v(Mat::Zero(rows, cols)) {}

  // Returns the additive update for a descent step on `grad`.
  Mat update(const Mat& grad, double lr) {
    ++step;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, step);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, step);
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad.cwiseProduct(grad);
    return (-lr * (m / bc1).array() / ((v / bc2).array().sqrt() + kAdamEps)).matrix();
  }
};

}  // namespace fgu

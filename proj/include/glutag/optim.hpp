#pragma once

#include <cmath>
#include <vector>

#include "glutag/layers.hpp"

namespace glutag {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> first;   // m
  std::vector<Matrix<Scalar>> second;  // v
  long step = 0;
};

/// One bias-corrected Adam update over parallel lists of parameters and
/// gradients. Returns false and leaves everything untouched when any
/// gradient entry is non-finite.
template <typename Scalar>
bool adam_step(const std::vector<Matrix<Scalar>*>& params,
               const std::vector<const Matrix<Scalar>*>& grads, AdamState<Scalar>& state,
               const AdamConfig& cfg = {}) {
  if (params.size() != grads.size()) throw Error(ErrorCode::kShapeMismatch, "Adam list sizes");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols())
      throw Error(ErrorCode::kShapeMismatch, "Adam parameter/gradient shapes");
    if (!grads[i]->allFinite()) return false;
  }
  if (state.first.empty()) {
    for (const auto* p : params) {
      state.first.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      state.second.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
    }
  }
  ++state.step;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar correct1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, state.step));
  const Scalar correct2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, state.step));
  const auto lr = static_cast<Scalar>(cfg.learning_rate);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first[i];
    auto& v = state.second[i];
    const auto& g = *grads[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    params[i]->array() -=
        lr * (m.array() / correct1) / ((v.array() / correct2).sqrt() + eps);
  }
  return true;
}

}  // namespace glutag

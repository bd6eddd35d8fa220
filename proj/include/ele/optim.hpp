#pragma once

#include <cmath>
#include <vector>

#include "ele/errors.hpp"
#include "ele/graph.hpp"

namespace ele {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over an ordered list of parameter matrices. The order of `grads` passed to step()
/// must match the order of `params` given at construction.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Matrix<Scalar>*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    if (config_.learning_rate < 0) throw ConfigError("learning rate must be non-negative");
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<Matrix<Scalar>>& grads) {
    if (grads.size() != params_.size()) throw ContractError("Adam::step: gradient count mismatch");
    ++t_;
    if (config_.learning_rate == 0) return;
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto lr = static_cast<Scalar>(config_.learning_rate * std::sqrt(1.0 - std::pow(config_.beta2, t_)) /
                                        (1.0 - std::pow(config_.beta1, t_)));
    const auto eps = static_cast<Scalar>(config_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grads[i].cwiseAbs2();
      params_[i]->array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Matrix<Scalar>*> params_;
  AdamConfig config_;
  std::vector<Matrix<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace ele

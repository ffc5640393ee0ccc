#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "bigr/nn/tensor.hpp"

namespace bigr::nn {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double weight_decay = 2e-2;
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables
};

// Linear warmup over min(200, 5% of the run), then cosine decay to 10% of
// the base rate at the final step. `step` is zero-based.
inline double warmup_cosine_lr(double base, long step, long total_steps) {
  const double total = static_cast<double>(std::max(1L, total_steps));
  const double warmup = std::min(200.0, 0.05 * total);
  const double pos = static_cast<double>(step);
  if (pos < warmup) return base * (pos + 1.0) / warmup;
  const double frac = std::min(1.0, (pos - warmup) / std::max(1.0, total - warmup));
  return base * (0.1 + 0.45 * (1.0 + std::cos(3.141592653589793 * frac)));
}

// Adam with decoupled weight decay. Parameters flagged decay=false (biases,
// embeddings) skip the decay term.
template <class T>
class AdamW {
 public:
  AdamW(ParameterSet<T>& params, AdamWConfig config) : params_(params), config_(config) {
    for (auto& p : params_) {
      m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  // Returns the pre-clip global gradient norm.
  double step() {
    double sq = 0.0;
    for (auto& p : params_) sq += static_cast<double>(p->grad.squaredNorm());
    const double norm = std::sqrt(sq);
    double clip = 1.0;
    if (config_.grad_clip > 0.0 && norm > config_.grad_clip) clip = config_.grad_clip / norm;

    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const T lr = static_cast<T>(config_.learning_rate);
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T eps = static_cast<T>(config_.epsilon);
    const T wd = static_cast<T>(config_.learning_rate * config_.weight_decay);
    const T step_size = static_cast<T>(config_.learning_rate / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    std::size_t i = 0;
    for (auto& p : params_) {
      Matrix<T>& m = m_[i];
      Matrix<T>& v = v_[i];
      ++i;
      if (lr == T(0)) continue;
      const Matrix<T> g = p->grad * static_cast<T>(clip);
      m = b1 * m + (T(1) - b1) * g;
      v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
      if (p->decay) p->value *= (T(1) - wd);
      p->value.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
    }
    return norm;
  }

  long steps() const { return steps_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamWConfig& config() const { return config_; }

 private:
  ParameterSet<T>& params_;
  AdamWConfig config_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  long steps_ = 0;
};

}  // namespace bigr::nn

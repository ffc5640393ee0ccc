#pragma once

#include <algorithm>
#include <cmath>

namespace bigr {

inline constexpr double kProbEps = 1e-7;

// Weighted BCE for one K-bit row, given logits. Weights follow
//   w_k = (1 - y_k) * ybar + y_k * (1 - ybar) + 1/K,  ybar = mean(y).
// Probabilities are clamped to [eps, 1 - eps] before the log. When `grad` is
// non-null it receives dL/dlogit (zero where the clamp is active).
template <class T>
double wbce_row(const T* logits, const T* targets, int k, double eps, T* grad) {
  double ybar = 0.0;
  for (int j = 0; j < k; ++j) ybar += static_cast<double>(targets[j]);
  ybar /= k;
  double acc = 0.0;
  for (int j = 0; j < k; ++j) {
    const double y = static_cast<double>(targets[j]);
    const double w = (1.0 - y) * ybar + y * (1.0 - ybar) + 1.0 / k;
    const double p_raw = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[j])));
    const bool clamped = p_raw < eps || p_raw > 1.0 - eps;
    const double p = std::clamp(p_raw, eps, 1.0 - eps);
    acc += w * (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    if (grad) grad[j] = clamped ? T(0) : static_cast<T>(w * (p - y) / k);
  }
  return -acc / k;
}

}  // namespace bigr

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bigr/binary_codec.hpp"
#include "bigr/rng.hpp"

namespace bigr {

// Per-step flip-mixing coefficients and cumulative survival products of the
// Bernoulli corruption q(z^t | z^{t-1}) = B(z^{t-1} (1 - beta_t) + beta_t / 2).
//
// Steps are 1-based in the accessors: beta(t), survival(t) for t in [1, T],
// with survival(0) = 1. `timestep(t)` maps a (possibly respaced) step back to
// the training-time index fed to the denoiser.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  NoiseSchedule(std::vector<double> beta, std::vector<double> survival, std::vector<int> timesteps,
                int training_steps);

  int steps() const { return static_cast<int>(beta_.size()); }
  int training_steps() const { return training_steps_; }
  double beta(int t) const;
  double survival(int t) const;
  int timestep(int t) const;

  std::span<const double> betas() const { return beta_; }
  std::span<const double> survivals() const { return survival_; }
  std::span<const int> timesteps() const { return timesteps_; }

 private:
  std::vector<double> beta_;
  std::vector<double> survival_;
  std::vector<int> timesteps_;
  int training_steps_ = 0;
};

// beta_t = 1 / (T - t + 1), so survival k_t = (T - t) / T and k_T = 0.
NoiseSchedule build_schedule(int total_steps);

// Keeps `inference_steps` evenly spaced steps t_j = round(j * T / T_infer),
// always ending at T. Kept survival values are copied verbatim, and
// beta'_j = 1 - k(t_j) / k(t_{j-1}).
NoiseSchedule respace_schedule(const NoiseSchedule& schedule, int inference_steps);

// P(z^t = 1 | z^0) = z0 * k_t + (1 - k_t) / 2.
double forward_marginal(std::uint8_t z0, int t, const NoiseSchedule& schedule);
std::vector<double> forward_marginal(std::span<const std::uint8_t> z0, int t, const NoiseSchedule& schedule);
std::vector<std::uint8_t> forward_sample(std::span<const std::uint8_t> z0, int t, const NoiseSchedule& schedule,
                                         Rng& rng);

// P(z^0 = 1) from the noisy bit and the predicted probability that the XOR
// residual z^t ^ z^0 is set.
inline double residual_to_initial(std::uint8_t z_t, double residual_prob) {
  return z_t ? 1.0 - residual_prob : residual_prob;
}
std::vector<double> residual_to_initial(std::span<const std::uint8_t> z_t, std::span<const double> residual_probs);

// P(z^{t-1} = 1 | z^t, p_z0): the exact two-state posterior averaged over
// z0 ~ B(p_z0). At t = 1 this is p_z0 itself.
double posterior_param(std::uint8_t z_t, double p_z0, int t, const NoiseSchedule& schedule);
std::vector<double> posterior_param(std::span<const std::uint8_t> z_t, std::span<const double> p_z0, int t,
                                    const NoiseSchedule& schedule);

// Pre-sigmoid logits with their probabilities.
struct ResidualPrediction {
  std::vector<double> logits;
  std::vector<double> probs;

  static ResidualPrediction from_logits(std::vector<double> logits);
};

struct WbceResult {
  double loss = 0.0;
  std::vector<double> weights;
  std::vector<double> grad_logits;
};

std::vector<double> wbce_weights(std::span<const std::uint8_t> target);
WbceResult wbce_loss(const ResidualPrediction& prediction, const BinaryCode& target);

struct GuidanceConfig {
  double scale = 2.5;
  bool enabled = true;
};

// uncond + s * (cond - uncond). s = 1 returns the conditional logit and s = 0
// the unconditional one, bit for bit.
inline double guided_logit(double cond, double uncond, double scale) {
  if (scale == 1.0) return cond;
  if (scale == 0.0) return uncond;
  return uncond + scale * (cond - uncond);
}

}  // namespace bigr

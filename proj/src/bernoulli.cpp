#include "bigr/bernoulli.hpp"

#include <cmath>
#include <string>

#include "bigr/errors.hpp"
#include "bigr/wbce.hpp"

namespace bigr {

namespace {

void check_step(int t, const NoiseSchedule& schedule, int lowest) {
  require(t >= lowest && t <= schedule.steps(), ErrorKind::InvalidInput,
          "timestep " + std::to_string(t) + " outside [" + std::to_string(lowest) + ", " +
              std::to_string(schedule.steps()) + "]");
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> beta, std::vector<double> survival, std::vector<int> timesteps,
                             int training_steps)
    : beta_(std::move(beta)),
      survival_(std::move(survival)),
      timesteps_(std::move(timesteps)),
      training_steps_(training_steps) {
  require(!beta_.empty() && beta_.size() == survival_.size() && beta_.size() == timesteps_.size(),
          ErrorKind::InvalidInput, "inconsistent schedule arrays");
}

double NoiseSchedule::beta(int t) const {
  check_step(t, *this, 1);
  return beta_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::survival(int t) const {
  check_step(t, *this, 0);
  return t == 0 ? 1.0 : survival_[static_cast<std::size_t>(t - 1)];
}

int NoiseSchedule::timestep(int t) const {
  check_step(t, *this, 1);
  return timesteps_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule build_schedule(int total_steps) {
  require(total_steps >= 1, ErrorKind::InvalidInput, "diffusion needs at least one timestep");
  std::vector<double> beta(total_steps), survival(total_steps);
  std::vector<int> timesteps(total_steps);
  const double T = total_steps;
  for (int t = 1; t <= total_steps; ++t) {
    beta[t - 1] = 1.0 / static_cast<double>(total_steps - t + 1);
    survival[t - 1] = static_cast<double>(total_steps - t) / T;
    timesteps[t - 1] = t;
  }
  return NoiseSchedule(std::move(beta), std::move(survival), std::move(timesteps), total_steps);
}

NoiseSchedule respace_schedule(const NoiseSchedule& schedule, int inference_steps) {
  const int T = schedule.steps();
  require(inference_steps >= 1 && inference_steps <= T, ErrorKind::InvalidInput,
          "inference steps " + std::to_string(inference_steps) + " must lie in [1, " + std::to_string(T) + "]");
  std::vector<double> beta(inference_steps), survival(inference_steps);
  std::vector<int> timesteps(inference_steps);
  int prev = 0;
  for (int j = 1; j <= inference_steps; ++j) {
    // round(j * T / T_infer), half up, in integer arithmetic
    const long long t = (2LL * j * T + inference_steps) / (2LL * inference_steps);
    const int kept = static_cast<int>(t);
    const double k_prev = schedule.survival(prev);
    const double k_cur = schedule.survival(kept);
    survival[j - 1] = k_cur;
    beta[j - 1] = 1.0 - k_cur / k_prev;
    timesteps[j - 1] = schedule.timestep(kept);
    prev = kept;
  }
  return NoiseSchedule(std::move(beta), std::move(survival), std::move(timesteps), schedule.training_steps());
}

double forward_marginal(std::uint8_t z0, int t, const NoiseSchedule& schedule) {
  check_step(t, schedule, 1);
  const double k = schedule.survival(t);
  return (z0 ? k : 0.0) + 0.5 * (1.0 - k);
}

std::vector<double> forward_marginal(std::span<const std::uint8_t> z0, int t, const NoiseSchedule& schedule) {
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = forward_marginal(z0[i], t, schedule);
  return out;
}

std::vector<std::uint8_t> forward_sample(std::span<const std::uint8_t> z0, int t, const NoiseSchedule& schedule,
                                         Rng& rng) {
  std::vector<std::uint8_t> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = rng.bernoulli(forward_marginal(z0[i], t, schedule)) ? 1 : 0;
  return out;
}

std::vector<double> residual_to_initial(std::span<const std::uint8_t> z_t, std::span<const double> residual_probs) {
  require(z_t.size() == residual_probs.size(), ErrorKind::InvalidInput, "residual shape mismatch");
  std::vector<double> out(z_t.size());
  for (std::size_t i = 0; i < z_t.size(); ++i) out[i] = residual_to_initial(z_t[i], residual_probs[i]);
  return out;
}

double posterior_param(std::uint8_t z_t, double p_z0, int t, const NoiseSchedule& schedule) {
  check_step(t, schedule, 1);
  if (t == 1) return p_z0;
  const double beta = schedule.beta(t);
  const double k_prev = schedule.survival(t - 1);
  // q(z^t | z^{t-1} = b)
  const double step1 = 1.0 - 0.5 * beta;  // P(z^t = 1 | b = 1)
  const double step0 = 0.5 * beta;        // P(z^t = 1 | b = 0)
  const double like1 = z_t ? step1 : 1.0 - step1;
  const double like0 = z_t ? step0 : 1.0 - step0;
  // q(z^{t-1} = 1 | z0)
  const double prior_given1 = k_prev + 0.5 * (1.0 - k_prev);
  const double prior_given0 = 0.5 * (1.0 - k_prev);
  const auto post = [&](double prior1) {
    const double a1 = like1 * prior1;
    const double a0 = like0 * (1.0 - prior1);
    return a1 / (a1 + a0);
  };
  return p_z0 * post(prior_given1) + (1.0 - p_z0) * post(prior_given0);
}

std::vector<double> posterior_param(std::span<const std::uint8_t> z_t, std::span<const double> p_z0, int t,
                                    const NoiseSchedule& schedule) {
  require(z_t.size() == p_z0.size(), ErrorKind::InvalidInput, "posterior shape mismatch");
  std::vector<double> out(z_t.size());
  for (std::size_t i = 0; i < z_t.size(); ++i) out[i] = posterior_param(z_t[i], p_z0[i], t, schedule);
  return out;
}

ResidualPrediction ResidualPrediction::from_logits(std::vector<double> logits) {
  ResidualPrediction p;
  p.probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p.probs[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  p.logits = std::move(logits);
  return p;
}

std::vector<double> wbce_weights(std::span<const std::uint8_t> target) {
  const double k = static_cast<double>(target.size());
  double ybar = 0.0;
  for (auto y : target) ybar += y;
  ybar /= k;
  std::vector<double> w(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double y = target[i];
    w[i] = (1.0 - y) * ybar + y * (1.0 - ybar) + 1.0 / k;
  }
  return w;
}

WbceResult wbce_loss(const ResidualPrediction& prediction, const BinaryCode& target) {
  const std::size_t k = target.bits.size();
  require(k > 0 && prediction.logits.size() == k, ErrorKind::InvalidInput,
          "prediction width " + std::to_string(prediction.logits.size()) + " does not match target width " +
              std::to_string(k));
  WbceResult r;
  r.weights = wbce_weights(target.bits);
  std::vector<double> y(target.bits.begin(), target.bits.end());
  r.grad_logits.resize(k);
  r.loss = wbce_row(prediction.logits.data(), y.data(), static_cast<int>(k), kProbEps, r.grad_logits.data());
  return r;
}

}  // namespace bigr

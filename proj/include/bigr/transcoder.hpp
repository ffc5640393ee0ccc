#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bigr/bernoulli.hpp"
#include "bigr/nn/ops.hpp"

namespace bigr {

// What the denoiser is trained to predict.
//   Residual:    z^t XOR z^0 (default)
//   InitialCode: z^0 directly
//   DirectBce:   z^0 from h alone, no diffusion (single-step decode)
enum class TranscoderTarget { Residual, InitialCode, DirectBce };

std::string_view to_string(TranscoderTarget target);
TranscoderTarget parse_transcoder_target(std::string_view text);

struct TranscoderConfig {
  int code_bits = 16;
  int cond_dim = 128;
  int width = 256;
  int layers = 3;
  int time_dim = 64;
  int total_steps = 64;  // training diffusion steps T
  TranscoderTarget target = TranscoderTarget::Residual;

  void validate() const;
};

template <class T>
nn::Matrix<T> timestep_embedding(std::span<const int> timesteps, int dim);

// Per-token MLP g(z^t, t, h) with adaptive layer norm: every residual block
// is modulated (shift, scale, gate) by a projection of time + condition.
// Applied independently to each row.
template <class T>
class Transcoder {
 public:
  Transcoder(TranscoderConfig config, nn::ParameterSet<T>& params, Rng& rng);

  const TranscoderConfig& config() const { return config_; }

  // z_signed: rows x K with entries in {-1, +1} (all zero for DirectBce);
  // timesteps: one training-scale step per row; h: rows x cond_dim.
  nn::Var logits(nn::Tape<T>& tape, nn::Var z_signed, std::span<const int> timesteps, nn::Var h) const;

 private:
  struct Block {
    nn::Parameter<T>* mod_w;
    nn::Parameter<T>* mod_b;
    nn::Parameter<T>* fc1_w;
    nn::Parameter<T>* fc1_b;
    nn::Parameter<T>* fc2_w;
    nn::Parameter<T>* fc2_b;
  };

  TranscoderConfig config_;
  nn::Parameter<T>* in_w_;
  nn::Parameter<T>* in_b_;
  nn::Parameter<T>* time1_w_;
  nn::Parameter<T>* time1_b_;
  nn::Parameter<T>* time2_w_;
  nn::Parameter<T>* time2_b_;
  nn::Parameter<T>* cond_w_;
  nn::Parameter<T>* cond_b_;
  std::vector<Block> blocks_;
  nn::Parameter<T>* final_mod_w_;
  nn::Parameter<T>* final_mod_b_;
  nn::Parameter<T>* out_w_;
  nn::Parameter<T>* out_b_;
};

// uncond + s * (cond - uncond), elementwise, in double precision.
template <class T>
nn::Matrix<double> guided_logits(const nn::Matrix<T>& cond, const nn::Matrix<T>& uncond, double scale);

struct DenoiseOptions {
  GuidanceConfig guidance;
  bool deterministic = false;
};

struct DenoiseResult {
  int rows = 0;
  int bits_per_code = 0;
  std::vector<std::uint8_t> bits;  // rows * K, final z^0 estimate
  std::vector<double> probs;       // rows * K, final P(z^0 = 1)

  std::span<const std::uint8_t> code(int row) const {
    return std::span<const std::uint8_t>(bits).subspan(static_cast<std::size_t>(row) * bits_per_code, bits_per_code);
  }
  std::span<const double> code_probs(int row) const {
    return std::span<const double>(probs).subspan(static_cast<std::size_t>(row) * bits_per_code, bits_per_code);
  }
};

// Reverse Bernoulli diffusion for a set of token features. Starts from a fair
// coin draw at the last step of `schedule` (usually respaced for inference)
// and walks back to t = 1. `h_uncond` may be null, in which case no guidance
// is applied.
template <class T>
DenoiseResult denoise_sample(const Transcoder<T>& transcoder, const nn::Matrix<T>& h_cond,
                             const nn::Matrix<T>* h_uncond, const NoiseSchedule& schedule,
                             const DenoiseOptions& options, Rng& rng);

}  // namespace bigr

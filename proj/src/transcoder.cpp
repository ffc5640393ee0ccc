#include "bigr/transcoder.hpp"

#include <cmath>
#include <string>

#include "bigr/errors.hpp"

namespace bigr {

std::string_view to_string(TranscoderTarget target) {
  switch (target) {
    case TranscoderTarget::Residual: return "residual";
    case TranscoderTarget::InitialCode: return "z0";
    case TranscoderTarget::DirectBce: return "direct";
  }
  return "residual";
}

TranscoderTarget parse_transcoder_target(std::string_view text) {
  if (text == "residual" || text == "xor") return TranscoderTarget::Residual;
  if (text == "z0" || text == "initial") return TranscoderTarget::InitialCode;
  if (text == "direct" || text == "direct-bce") return TranscoderTarget::DirectBce;
  fail(ErrorKind::InvalidInput,
       "unknown transcoder target \"" + std::string(text) + "\" (expected residual, z0 or direct)");
}

void TranscoderConfig::validate() const {
  if (code_bits > kMaxCodeWidth) fail(ErrorKind::UnsupportedWidth, "code width exceeds 32 bits");
  require(code_bits >= 1 && cond_dim >= 1 && width >= 1 && layers >= 1 && total_steps >= 1,
          ErrorKind::InvalidInput, "transcoder sizes must be positive");
  require(time_dim >= 2 && time_dim % 2 == 0, ErrorKind::InvalidInput, "time embedding dim must be even");
}

template <class T>
nn::Matrix<T> timestep_embedding(std::span<const int> timesteps, int dim) {
  const int half = dim / 2;
  nn::Matrix<T> out(static_cast<Eigen::Index>(timesteps.size()), dim);
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    for (int j = 0; j < half; ++j) {
      const double freq = std::exp(-std::log(10000.0) * j / half);
      const double arg = timesteps[i] * freq;
      out(static_cast<Eigen::Index>(i), j) = static_cast<T>(std::cos(arg));
      out(static_cast<Eigen::Index>(i), half + j) = static_cast<T>(std::sin(arg));
    }
  }
  return out;
}

template <class T>
Transcoder<T>::Transcoder(TranscoderConfig config, nn::ParameterSet<T>& params, Rng& rng)
    : config_(std::move(config)) {
  config_.validate();
  const int w = config_.width;
  const int k = config_.code_bits;
  in_w_ = &params.add("tc.in.w", nn::xavier<T>(rng, k, w));
  in_b_ = &params.add("tc.in.b", nn::zeros<T>(1, w), false);
  time1_w_ = &params.add("tc.time1.w", nn::normal_matrix<T>(rng, config_.time_dim, w, 0.02));
  time1_b_ = &params.add("tc.time1.b", nn::zeros<T>(1, w), false);
  time2_w_ = &params.add("tc.time2.w", nn::normal_matrix<T>(rng, w, w, 0.02));
  time2_b_ = &params.add("tc.time2.b", nn::zeros<T>(1, w), false);
  cond_w_ = &params.add("tc.cond.w", nn::xavier<T>(rng, config_.cond_dim, w));
  cond_b_ = &params.add("tc.cond.b", nn::zeros<T>(1, w), false);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "tc.block" + std::to_string(l) + ".";
    Block b;
    // Zero modulation: every block starts as the identity.
    b.mod_w = &params.add(p + "mod.w", nn::zeros<T>(w, 3 * w));
    b.mod_b = &params.add(p + "mod.b", nn::zeros<T>(1, 3 * w), false);
    b.fc1_w = &params.add(p + "fc1.w", nn::xavier<T>(rng, w, w));
    b.fc1_b = &params.add(p + "fc1.b", nn::zeros<T>(1, w), false);
    b.fc2_w = &params.add(p + "fc2.w", nn::xavier<T>(rng, w, w));
    b.fc2_b = &params.add(p + "fc2.b", nn::zeros<T>(1, w), false);
    blocks_.push_back(b);
  }
  final_mod_w_ = &params.add("tc.final.mod.w", nn::zeros<T>(w, 2 * w));
  final_mod_b_ = &params.add("tc.final.mod.b", nn::zeros<T>(1, 2 * w), false);
  // Zero output layer: initial predictions are exactly p = 0.5.
  out_w_ = &params.add("tc.out.w", nn::zeros<T>(w, k));
  out_b_ = &params.add("tc.out.b", nn::zeros<T>(1, k), false);
}

template <class T>
nn::Var Transcoder<T>::logits(nn::Tape<T>& tape, nn::Var z_signed, std::span<const int> timesteps, nn::Var h) const {
  const int w = config_.width;
  const auto rows = tape.value(z_signed).rows();
  require(tape.value(z_signed).cols() == config_.code_bits && tape.value(h).rows() == rows &&
              tape.value(h).cols() == config_.cond_dim && static_cast<Eigen::Index>(timesteps.size()) == rows,
          ErrorKind::Internal, "transcoder input shape mismatch");
  using nn::linear;
  nn::Var x = linear(tape, z_signed, tape.param(*in_w_), tape.param(*in_b_));
  nn::Var temb = tape.constant(timestep_embedding<T>(timesteps, config_.time_dim));
  temb = linear(tape, nn::silu(tape, linear(tape, temb, tape.param(*time1_w_), tape.param(*time1_b_))),
                tape.param(*time2_w_), tape.param(*time2_b_));
  nn::Var cemb = linear(tape, h, tape.param(*cond_w_), tape.param(*cond_b_));
  nn::Var c = nn::silu(tape, nn::add(tape, temb, cemb));
  for (const Block& b : blocks_) {
    nn::Var mod = linear(tape, c, tape.param(*b.mod_w), tape.param(*b.mod_b));
    nn::Var shift = nn::slice_cols(tape, mod, 0, w);
    nn::Var scl = nn::slice_cols(tape, mod, w, w);
    nn::Var gate = nn::slice_cols(tape, mod, 2 * w, w);
    nn::Var y = nn::modulate(tape, nn::layer_norm(tape, x), shift, scl, 1);
    y = linear(tape, nn::silu(tape, linear(tape, y, tape.param(*b.fc1_w), tape.param(*b.fc1_b))),
               tape.param(*b.fc2_w), tape.param(*b.fc2_b));
    x = nn::gated_add(tape, x, y, gate, 1);
  }
  nn::Var mod = linear(tape, c, tape.param(*final_mod_w_), tape.param(*final_mod_b_));
  nn::Var y = nn::modulate(tape, nn::layer_norm(tape, x), nn::slice_cols(tape, mod, 0, w),
                           nn::slice_cols(tape, mod, w, w), 1);
  return linear(tape, y, tape.param(*out_w_), tape.param(*out_b_));
}

template <class T>
nn::Matrix<double> guided_logits(const nn::Matrix<T>& cond, const nn::Matrix<T>& uncond, double scale) {
  require(cond.rows() == uncond.rows() && cond.cols() == uncond.cols(), ErrorKind::InvalidInput,
          "guidance branches differ in shape");
  nn::Matrix<double> out(cond.rows(), cond.cols());
  for (Eigen::Index i = 0; i < cond.size(); ++i) {
    out.data()[i] = guided_logit(static_cast<double>(cond.data()[i]), static_cast<double>(uncond.data()[i]), scale);
  }
  return out;
}

namespace {

template <class T>
nn::Matrix<double> run_logits(const Transcoder<T>& transcoder, const nn::Matrix<T>& z_signed, int timestep,
                              const nn::Matrix<T>& h_cond, const nn::Matrix<T>* h_uncond, const DenoiseOptions& opt) {
  const std::vector<int> steps(static_cast<std::size_t>(h_cond.rows()), timestep);
  nn::Tape<T> tape(false);
  nn::Var z = tape.constant(z_signed);
  const nn::Matrix<T>& cond = tape.value(transcoder.logits(tape, z, steps, tape.constant(h_cond)));
  if (h_uncond == nullptr || !opt.guidance.enabled) return cond.template cast<double>();
  const nn::Matrix<T>& uncond = tape.value(transcoder.logits(tape, z, steps, tape.constant(*h_uncond)));
  return guided_logits<T>(cond, uncond, opt.guidance.scale);
}

void check_finite(const nn::Matrix<double>& logits, int step) {
  if (!logits.allFinite()) {
    fail(ErrorKind::NumericFailure, "non-finite transcoder logits at denoising step " + std::to_string(step));
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

template <class T>
DenoiseResult denoise_sample(const Transcoder<T>& transcoder, const nn::Matrix<T>& h_cond,
                             const nn::Matrix<T>* h_uncond, const NoiseSchedule& schedule,
                             const DenoiseOptions& options, Rng& rng) {
  const auto& cfg = transcoder.config();
  const int k = cfg.code_bits;
  const int rows = static_cast<int>(h_cond.rows());
  require(h_uncond == nullptr || (h_uncond->rows() == rows && h_uncond->cols() == h_cond.cols()),
          ErrorKind::InvalidInput, "conditional and unconditional features differ in shape");
  DenoiseResult result;
  result.rows = rows;
  result.bits_per_code = k;
  result.bits.assign(static_cast<std::size_t>(rows) * k, 0);
  result.probs.assign(static_cast<std::size_t>(rows) * k, 0.5);
  if (rows == 0) return result;

  auto draw = [&](double p) -> std::uint8_t {
    if (options.deterministic) return p > 0.5 ? 1 : 0;
    return rng.bernoulli(p) ? 1 : 0;
  };

  if (cfg.target == TranscoderTarget::DirectBce) {
    const nn::Matrix<T> zeros = nn::Matrix<T>::Zero(rows, k);
    const nn::Matrix<double> logits = run_logits(transcoder, zeros, 0, h_cond, h_uncond, options);
    check_finite(logits, 0);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      result.probs[static_cast<std::size_t>(i)] = sigmoid(logits.data()[i]);
      result.bits[static_cast<std::size_t>(i)] = draw(result.probs[static_cast<std::size_t>(i)]);
    }
    return result;
  }

  // z^T ~ B(0.5)
  std::vector<std::uint8_t> z(static_cast<std::size_t>(rows) * k);
  for (auto& b : z) b = rng.bernoulli(0.5) ? 1 : 0;
  nn::Matrix<T> z_signed(rows, k);
  for (int step = schedule.steps(); step >= 1; --step) {
    for (std::size_t i = 0; i < z.size(); ++i) z_signed.data()[i] = z[i] ? T(1) : T(-1);
    const nn::Matrix<double> logits =
        run_logits(transcoder, z_signed, schedule.timestep(step), h_cond, h_uncond, options);
    check_finite(logits, step);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = sigmoid(logits.data()[i]);
      const double p_z0 = cfg.target == TranscoderTarget::Residual ? residual_to_initial(z[i], p) : p;
      if (step == 1) {
        result.probs[i] = p_z0;
        result.bits[i] = draw(p_z0);
      } else {
        z[i] = draw(posterior_param(z[i], p_z0, step, schedule));
      }
    }
  }
  return result;
}

template class Transcoder<float>;
template class Transcoder<double>;
template nn::Matrix<float> timestep_embedding<float>(std::span<const int>, int);
template nn::Matrix<double> timestep_embedding<double>(std::span<const int>, int);
template nn::Matrix<double> guided_logits<float>(const nn::Matrix<float>&, const nn::Matrix<float>&, double);
template nn::Matrix<double> guided_logits<double>(const nn::Matrix<double>&, const nn::Matrix<double>&, double);
template DenoiseResult denoise_sample(const Transcoder<float>&, const nn::Matrix<float>&, const nn::Matrix<float>*,
                                      const NoiseSchedule&, const DenoiseOptions&, Rng&);
template DenoiseResult denoise_sample(const Transcoder<double>&, const nn::Matrix<double>&,
                                      const nn::Matrix<double>*, const NoiseSchedule&, const DenoiseOptions&, Rng&);

}  // namespace bigr

#include "bigr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "bigr/errors.hpp"
#include "bigr/store_io.hpp"

namespace bigr {

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorKind::InvalidInput, "epochs must be >= 0");
  require(batch_size >= 1, ErrorKind::InvalidInput, "batch size must be >= 1");
  require(learning_rate >= 0.0 && weight_decay >= 0.0, ErrorKind::InvalidInput,
          "learning rate and weight decay must be >= 0");
  require(monitor_size >= 1, ErrorKind::InvalidInput, "monitor size must be >= 1");
}

template <class T>
StepStats training_step(const GenerativeModel<T>& model, std::span<const BinaryCodeGrid> codes,
                        std::span<const int> labels, double cond_dropout, Rng& rng, bool backward) {
  require(!codes.empty() && codes.size() == labels.size(), ErrorKind::InvalidInput,
          "batch codes and labels differ in length");
  const int n = model.seq_len();
  const int k = model.code_bits();
  const int steps = model.schedule().steps();
  const auto& bb = model.backbone();
  const TranscoderTarget target = model.config().transcoder.target;
  for (const auto& g : codes) {
    require(g.size() == n && g.bits_per_code() == k, ErrorKind::InvalidInput,
            "code grid does not match the model (" + std::to_string(g.size()) + " tokens of " +
                std::to_string(g.bits_per_code()) + " bits)");
  }

  const std::size_t batch = codes.size();
  std::vector<std::uint8_t> masked;
  masked.reserve(batch * n);
  std::vector<int> ids(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const MaskState m = sample_train_mask(n, rng);
    masked.insert(masked.end(), m.flags.begin(), m.flags.end());
    ids[b] = labels[b];
    if (cond_dropout > 0.0 && rng.bernoulli(cond_dropout)) ids[b] = model.uncond_id();
  }

  // Gather masked tokens and corrupt each with its own timestep.
  std::vector<int> rows;
  std::vector<int> timesteps;
  std::vector<std::uint8_t> zt_all;
  nn::Matrix<T> targets(0, k);
  std::vector<std::uint8_t> target_bits;
  for (std::size_t b = 0; b < batch; ++b) {
    for (int p = 0; p < n; ++p) {
      if (!masked[b * n + static_cast<std::size_t>(p)]) continue;
      rows.push_back(static_cast<int>(b) * (n + 1) + 1 + p);
      const auto z0 = codes[b].code(p);
      if (target == TranscoderTarget::DirectBce) {
        timesteps.push_back(0);
        zt_all.insert(zt_all.end(), static_cast<std::size_t>(k), 0);
        target_bits.insert(target_bits.end(), z0.begin(), z0.end());
        continue;
      }
      const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(steps)));
      const auto zt = forward_sample(z0, t, model.schedule(), rng);
      timesteps.push_back(model.schedule().timestep(t));
      zt_all.insert(zt_all.end(), zt.begin(), zt.end());
      for (int j = 0; j < k; ++j) {
        target_bits.push_back(target == TranscoderTarget::Residual ? static_cast<std::uint8_t>(zt[j] ^ z0[j]) : z0[j]);
      }
    }
  }
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  nn::Matrix<T> z_signed(m, k);
  targets.resize(m, k);
  for (Eigen::Index i = 0; i < m * k; ++i) {
    const std::size_t s = static_cast<std::size_t>(i);
    z_signed.data()[i] = target == TranscoderTarget::DirectBce ? T(0) : (zt_all[s] ? T(1) : T(-1));
    targets.data()[i] = target_bits[s] ? T(1) : T(0);
  }

  nn::Tape<T> tape(backward);
  nn::Var cond = bb.class_embedding(tape, ids);
  nn::Var signed_codes = tape.constant(codes_to_signed_rows<T>(codes));
  nn::Var emb = bb.embed_sequence(tape, signed_codes, masked, cond);
  const BackboneOutput out = bb.forward(tape, emb, cond);
  nn::Var h = nn::gather_rows(tape, out.final, rows);
  nn::Var logits = model.transcoder().logits(tape, tape.constant(std::move(z_signed)), timesteps, h);
  nn::Var loss = nn::wbce_with_logits(tape, logits, targets, kProbEps);
  StepStats stats;
  stats.loss = static_cast<double>(tape.value(loss)(0, 0));
  stats.masked_tokens = static_cast<int>(m);
  if (!std::isfinite(stats.loss)) return stats;
  if (backward) tape.backward(loss);
  return stats;
}

double residual_prior_loss(int code_bits, const NoiseSchedule& schedule, int draws, std::uint64_t seed) {
  require(code_bits >= 1 && draws >= 1, ErrorKind::InvalidInput, "invalid prior-loss arguments");
  Rng rng(seed);
  double acc = 0.0;
  std::vector<std::uint8_t> z0(static_cast<std::size_t>(code_bits));
  for (int i = 0; i < draws; ++i) {
    for (auto& b : z0) b = rng.bernoulli(0.5) ? 1 : 0;
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.steps())));
    const auto zt = forward_sample(z0, t, schedule, rng);
    double ybar = 0.0;
    for (int k = 0; k < code_bits; ++k) ybar += (zt[k] ^ z0[k]);
    ybar /= code_bits;
    acc += 2.0 * ybar * (1.0 - ybar) + 1.0 / code_bits;
  }
  return std::log(2.0) * acc / draws;
}

template <class T>
double monitor_loss(const GenerativeModel<T>& model, std::span<const BinaryCodeGrid> codes, std::span<const int> labels,
                    const TrainConfig& config) {
  const std::size_t count = std::min(codes.size(), static_cast<std::size_t>(config.monitor_size));
  require(count > 0, ErrorKind::InvalidInput, "no samples to monitor");
  Rng rng(derive_seed(config.seed, 0x4D4F4Eull));
  std::vector<int> ids(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count));
  if (config.unconditional) std::fill(ids.begin(), ids.end(), model.uncond_id());
  double total = 0.0;
  long tokens = 0;
  for (std::size_t start = 0; start < count; start += config.batch_size) {
    const std::size_t len = std::min(count - start, static_cast<std::size_t>(config.batch_size));
    const StepStats s = training_step(model, codes.subspan(start, len),
                                      std::span<const int>(ids).subspan(start, len), 0.0, rng, false);
    total += s.loss * s.masked_tokens;
    tokens += s.masked_tokens;
  }
  return total / static_cast<double>(tokens);
}

template <class T>
TrainReport train_model(GenerativeModel<T>& model, std::span<const BinaryCodeGrid> codes, std::span<const int> labels,
                        const TrainConfig& config, const std::function<void(const EpochStats&)>& on_epoch) {
  config.validate();
  require(!codes.empty() && codes.size() == labels.size(), ErrorKind::InvalidInput,
          "training codes and labels differ in length or are empty");
  for (int l : labels) {
    require(l >= 0 && l < model.uncond_id(), ErrorKind::InvalidInput,
            "label " + std::to_string(l) + " is outside the model's classes");
  }
  nn::AdamWConfig opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;
  opt.grad_clip = config.grad_clip;
  nn::AdamW<T> optimizer(model.params(), opt);

  std::vector<int> train_labels(labels.begin(), labels.end());
  if (config.unconditional) std::fill(train_labels.begin(), train_labels.end(), model.uncond_id());
  const double dropout = config.unconditional ? 0.0 : model.config().backbone.cond_dropout;

  TrainReport report;
  report.reference_loss = residual_prior_loss(model.code_bits(), model.schedule(), 20000, derive_seed(config.seed, 7));
  report.initial_loss = monitor_loss(model, codes, labels, config);

  std::vector<nn::Matrix<T>> last_good;
  auto snapshot = [&]() {
    last_good.clear();
    for (const auto& p : model.params()) last_good.push_back(p->value);
  };
  auto restore = [&]() {
    std::size_t i = 0;
    for (auto& p : model.params()) p->value = last_good[i++];
  };
  snapshot();

  const long steps_per_epoch = static_cast<long>((codes.size() + config.batch_size - 1) / config.batch_size);
  const long total_steps = steps_per_epoch * config.epochs;
  long step = 0;
  Rng rng(derive_seed(config.seed, 0x545241ull));
  std::vector<BinaryCodeGrid> batch_codes;
  std::vector<int> batch_labels;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto order = shuffled_order(codes.size(), derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    double sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch_codes.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_codes.push_back(codes[order[i]]);
        batch_labels.push_back(train_labels[order[i]]);
      }
      model.params().zero_grad();
      const StepStats s = training_step(model, std::span<const BinaryCodeGrid>(batch_codes), batch_labels, dropout, rng);
      if (!std::isfinite(s.loss)) {
        restore();
        fail(ErrorKind::TrainingFailure, "training loss became non-finite at epoch " + std::to_string(epoch) +
                                             " step " + std::to_string(steps + 1) +
                                             "; parameters restored to the last completed epoch");
      }
      optimizer.set_learning_rate(nn::warmup_cosine_lr(config.learning_rate, step++, total_steps));
      optimizer.step();
      report.step_losses.push_back(s.loss);
      sum += s.loss;
      ++steps;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = steps ? sum / steps : 0.0;
    stats.monitor_loss = monitor_loss(model, codes, labels, config);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    snapshot();
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return report;
}

template StepStats training_step(const GenerativeModel<float>&, std::span<const BinaryCodeGrid>, std::span<const int>,
                                 double, Rng&, bool);
template StepStats training_step(const GenerativeModel<double>&, std::span<const BinaryCodeGrid>,
                                 std::span<const int>, double, Rng&, bool);
template double monitor_loss(const GenerativeModel<float>&, std::span<const BinaryCodeGrid>, std::span<const int>,
                             const TrainConfig&);
template double monitor_loss(const GenerativeModel<double>&, std::span<const BinaryCodeGrid>, std::span<const int>,
                             const TrainConfig&);
template TrainReport train_model(GenerativeModel<float>&, std::span<const BinaryCodeGrid>, std::span<const int>,
                                 const TrainConfig&, const std::function<void(const EpochStats&)>&);
template TrainReport train_model(GenerativeModel<double>&, std::span<const BinaryCodeGrid>, std::span<const int>,
                                 const TrainConfig&, const std::function<void(const EpochStats&)>&);

}  // namespace bigr

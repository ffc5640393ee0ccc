#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bigr/binary_codec.hpp"
#include "bigr/model.hpp"
#include "bigr/nn/optim.hpp"
#include "bigr/rng.hpp"

namespace bigr {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;  // peak of the warmup-cosine schedule
  double weight_decay = 2e-2;
  double grad_clip = 1.0;
  bool unconditional = false;  // every class token replaced by the unconditional one
  int monitor_size = 512;      // samples in the fixed-noise monitoring subset
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepStats {
  double loss = 0.0;
  int masked_tokens = 0;
};

// One forward pass of the joint objective on a batch: per sample a cosine
// mask, condition dropout, one diffusion step per masked token, wBCE on the
// transcoder output. Loss is the mean over all masked tokens in the batch.
// With `backward`, gradients are accumulated into model.params().
template <class T>
StepStats training_step(const GenerativeModel<T>& model, std::span<const BinaryCodeGrid> codes,
                        std::span<const int> labels, double cond_dropout, Rng& rng, bool backward = true);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;    // mean over the epoch's steps
  double monitor_loss = 0.0;  // fixed-noise loss on the monitoring subset
  double seconds = 0.0;
};

struct TrainReport {
  double initial_loss = 0.0;    // monitoring loss before the first update
  double reference_loss = 0.0;  // expected loss of a p = 0.5 predictor
  std::vector<double> step_losses;
  std::vector<EpochStats> epochs;
};

// Expected wBCE of a predictor that outputs 0.5 for every residual bit, with
// t ~ U{1..T} and z0 uniform: ln 2 * E[2 ybar (1 - ybar) + 1/K].
double residual_prior_loss(int code_bits, const NoiseSchedule& schedule, int draws, std::uint64_t seed);

template <class T>
double monitor_loss(const GenerativeModel<T>& model, std::span<const BinaryCodeGrid> codes, std::span<const int> labels,
                    const TrainConfig& config);

template <class T>
TrainReport train_model(GenerativeModel<T>& model, std::span<const BinaryCodeGrid> codes, std::span<const int> labels,
                        const TrainConfig& config, const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace bigr

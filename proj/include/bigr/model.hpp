#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "bigr/backbone.hpp"
#include "bigr/bernoulli.hpp"
#include "bigr/store_io.hpp"
#include "bigr/transcoder.hpp"

namespace bigr {

struct ModelConfig {
  BackboneConfig backbone;
  TranscoderConfig transcoder;

  void validate() const;
};

// Backbone f_theta and transcoder g_phi sharing one parameter set; trained jointly.
template <class T>
class GenerativeModel {
 public:
  GenerativeModel(ModelConfig config, std::uint64_t seed);
  GenerativeModel(const GenerativeModel&) = delete;
  GenerativeModel& operator=(const GenerativeModel&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParameterSet<T>& params() const { return params_; }
  const Backbone<T>& backbone() const { return *backbone_; }
  const Transcoder<T>& transcoder() const { return *transcoder_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  int seq_len() const { return config_.backbone.seq_len; }
  int code_bits() const { return config_.backbone.code_bits; }
  int uncond_id() const { return config_.backbone.uncond_id(); }

 private:
  ModelConfig config_;
  mutable nn::ParameterSet<T> params_;
  std::unique_ptr<Backbone<T>> backbone_;
  std::unique_ptr<Transcoder<T>> transcoder_;
  NoiseSchedule schedule_;
};

template <class T>
std::vector<NamedArray> export_parameters(const nn::ParameterSet<T>& params);

// Copies arrays by name. Missing names or shape mismatches raise a
// checkpoint-incompatibility error; nothing is modified in that case.
template <class T>
void import_parameters(nn::ParameterSet<T>& params, const Checkpoint& checkpoint);

}  // namespace bigr

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bigr/binary_codec.hpp"
#include "bigr/model.hpp"
#include "bigr/rng.hpp"

namespace bigr {

enum class SampleOrder { Entropy, Random, Raster };
enum class ConfidenceMode { Surrogate, ExactEntropy };

std::string_view to_string(SampleOrder order);
SampleOrder parse_sample_order(std::string_view text);
std::string_view to_string(ConfidenceMode mode);
ConfidenceMode parse_confidence_mode(std::string_view text);

struct SamplerConfig {
  int iterations = 8;
  double temperature = 0.17;  // Gumbel noise scale
  double cfg_scale = 2.5;
  int inference_steps = 32;
  SampleOrder order = SampleOrder::Entropy;
  ConfidenceMode confidence = ConfidenceMode::Surrogate;
  bool deterministic = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean per-bit base-2 entropy, probabilities clamped to [eps, 1 - eps] and
// exact 0 / 1 treated as zero entropy.
double binary_entropy(std::span<const double> probs);

// mean_k 2|p_k - 0.5| (surrogate) or 1 - H (exact).
double confidence_base(std::span<const double> probs, ConfidenceMode mode);

// One score per row of `probs` (rows * bits values): base + tau * Gumbel.
std::vector<double> confidence_scores(std::span<const double> probs, int bits, ConfidenceMode mode,
                                      double temperature, Rng& rng);

// Masked count left after iteration i of N over n tokens: floor(n cos(pi i / 2N)),
// forced strictly decreasing and reaching 0 at i = N. Requires 1 <= N <= n.
std::vector<int> unmask_remaining(int n, int iterations);
int unmask_schedule(int n, int iterations, int i);

// Indices into `scores` of the `count` largest values; ties go to the lower index.
std::vector<int> top_k(std::span<const double> scores, int count);

struct SampleTrace {
  struct Iteration {
    int index = 0;
    int remaining = 0;
    std::vector<int> candidates;  // positions that were masked at the start of the iteration
    std::vector<double> scores;   // one per candidate
    std::vector<int> unmasked;    // positions committed this iteration
    BinaryCodeGrid grid;          // committed codes after the iteration (masked positions are zero)
  };
  std::vector<Iteration> iterations;

  // One JSON object per line.
  std::string to_jsonl() const;
};

// Candidate codes for the currently masked positions, in increasing position order.
struct Candidates {
  std::vector<int> positions;
  std::vector<std::uint8_t> bits;  // positions.size() * K
  std::vector<double> probs;       // positions.size() * K
};

using CandidatePredictor =
    std::function<Candidates(const BinaryCodeGrid& committed, std::span<const std::uint8_t> masked, int iteration)>;

struct SampleResult {
  BinaryCodeGrid grid;
  SampleTrace trace;
};

// The unmasking loop, independent of any network. `masked` flags the positions
// to generate; all others keep their value from `initial`. Runs
// min(iterations, |masked|) iterations.
SampleResult run_unmask_loop(BinaryCodeGrid initial, std::vector<std::uint8_t> masked, const SamplerConfig& config,
                             Rng& rng, const CandidatePredictor& predict);

struct GenerateRequest {
  int class_id = 0;  // num_classes selects the unconditional token
  // Replaces the class embedding at the condition slot (1 x dim).
  std::optional<std::vector<double>> cond_embedding;
  // Fixed tokens; positions flagged in `generate` are produced by the sampler.
  std::optional<BinaryCodeGrid> initial;
  std::vector<std::uint8_t> generate;  // empty = every position
  // Candidates used in place of the model's draws on the first iteration.
  std::optional<BinaryCodeGrid> first_candidates;
};

template <class T>
SampleResult generate(const GenerativeModel<T>& model, const GenerateRequest& request, const SamplerConfig& config,
                      Rng& rng);

}  // namespace bigr

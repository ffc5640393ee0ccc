#include "bigr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "json.hpp"

#include "bigr/errors.hpp"
#include "bigr/wbce.hpp"

namespace bigr {

std::string_view to_string(SampleOrder order) {
  switch (order) {
    case SampleOrder::Entropy: return "entropy";
    case SampleOrder::Random: return "random";
    case SampleOrder::Raster: return "raster";
  }
  return "entropy";
}

SampleOrder parse_sample_order(std::string_view text) {
  if (text == "entropy") return SampleOrder::Entropy;
  if (text == "random") return SampleOrder::Random;
  if (text == "raster") return SampleOrder::Raster;
  fail(ErrorKind::InvalidInput, "unknown order \"" + std::string(text) + "\" (expected entropy, random or raster)");
}

std::string_view to_string(ConfidenceMode mode) {
  return mode == ConfidenceMode::Surrogate ? "surrogate" : "entropy";
}

ConfidenceMode parse_confidence_mode(std::string_view text) {
  if (text == "surrogate") return ConfidenceMode::Surrogate;
  if (text == "entropy" || text == "exact") return ConfidenceMode::ExactEntropy;
  fail(ErrorKind::InvalidInput, "unknown confidence mode \"" + std::string(text) + "\" (expected surrogate or entropy)");
}

void SamplerConfig::validate() const {
  require(iterations >= 1, ErrorKind::InvalidInput, "iterations must be >= 1");
  require(temperature >= 0.0 && std::isfinite(temperature), ErrorKind::InvalidInput, "temperature must be >= 0");
  require(cfg_scale >= 0.0 && std::isfinite(cfg_scale), ErrorKind::InvalidInput, "cfg scale must be >= 0");
  require(inference_steps >= 1, ErrorKind::InvalidInput, "inference steps must be >= 1");
}

double binary_entropy(std::span<const double> probs) {
  if (probs.empty()) return 0.0;
  double h = 0.0;
  for (double p : probs) {
    if (p <= 0.0 || p >= 1.0) continue;
    const double q = std::clamp(p, kProbEps, 1.0 - kProbEps);
    h -= q * std::log2(q) + (1.0 - q) * std::log2(1.0 - q);
  }
  return h / static_cast<double>(probs.size());
}

double confidence_base(std::span<const double> probs, ConfidenceMode mode) {
  if (probs.empty()) return 0.0;
  if (mode == ConfidenceMode::ExactEntropy) return 1.0 - binary_entropy(probs);
  double s = 0.0;
  for (double p : probs) s += 2.0 * std::abs(p - 0.5);
  return s / static_cast<double>(probs.size());
}

std::vector<double> confidence_scores(std::span<const double> probs, int bits, ConfidenceMode mode,
                                      double temperature, Rng& rng) {
  require(bits >= 1 && probs.size() % static_cast<std::size_t>(bits) == 0, ErrorKind::InvalidInput,
          "probabilities are not a whole number of codes");
  const std::size_t rows = probs.size() / static_cast<std::size_t>(bits);
  std::vector<double> scores(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    scores[r] = confidence_base(probs.subspan(r * bits, static_cast<std::size_t>(bits)), mode);
    if (temperature > 0.0) scores[r] += temperature * rng.gumbel();
  }
  return scores;
}

std::vector<int> unmask_remaining(int n, int iterations) {
  require(n >= 1 && iterations >= 1 && iterations <= n, ErrorKind::InvalidInput,
          "unmask schedule needs 1 <= iterations (" + std::to_string(iterations) + ") <= tokens (" +
              std::to_string(n) + ")");
  std::vector<int> remaining(static_cast<std::size_t>(iterations));
  int prev = n;
  for (int i = 1; i <= iterations; ++i) {
    int r = i == iterations ? 0
                            : static_cast<int>(std::floor(n * std::cos(3.141592653589793 * i / (2.0 * iterations))));
    // Leave at least one token for each later iteration, unmask at least one now.
    r = std::clamp(r, iterations - i, prev - 1);
    remaining[static_cast<std::size_t>(i - 1)] = r;
    prev = r;
  }
  return remaining;
}

int unmask_schedule(int n, int iterations, int i) {
  require(i >= 1 && i <= iterations, ErrorKind::InvalidInput, "iteration index out of range");
  return unmask_remaining(n, iterations)[static_cast<std::size_t>(i - 1)];
}

std::vector<int> top_k(std::span<const double> scores, int count) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  count = std::clamp(count, 0, static_cast<int>(idx.size()));
  std::partial_sort(idx.begin(), idx.begin() + count, idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

std::string SampleTrace::to_jsonl() const {
  std::string out;
  for (const auto& it : iterations) {
    nlohmann::json j;
    j["iteration"] = it.index;
    j["remaining"] = it.remaining;
    j["unmasked"] = it.unmasked;
    j["candidates"] = it.candidates;
    j["scores"] = it.scores;
    std::vector<std::uint64_t> tokens;
    for (int p = 0; p < it.grid.size(); ++p) tokens.push_back(code_to_index(it.grid.code(p)));
    j["tokens"] = tokens;
    out += j.dump();
    out += '\n';
  }
  return out;
}

SampleResult run_unmask_loop(BinaryCodeGrid initial, std::vector<std::uint8_t> masked, const SamplerConfig& config,
                             Rng& rng, const CandidatePredictor& predict) {
  config.validate();
  const int n = initial.size();
  const int k = initial.bits_per_code();
  require(static_cast<int>(masked.size()) == n, ErrorKind::InvalidInput, "mask length does not match the grid");
  int masked_count = static_cast<int>(std::count_if(masked.begin(), masked.end(), [](auto m) { return m != 0; }));
  SampleResult result;
  result.grid = std::move(initial);
  for (int p = 0; p < n; ++p) {
    if (masked[static_cast<std::size_t>(p)]) std::fill(result.grid.code(p).begin(), result.grid.code(p).end(), 0);
  }
  if (masked_count == 0) return result;

  const int total = masked_count;
  const int iterations = std::min(config.iterations, total);
  const std::vector<int> remaining = unmask_remaining(total, iterations);
  for (int i = 1; i <= iterations; ++i) {
    const Candidates cand = predict(result.grid, masked, i);
    require(static_cast<int>(cand.positions.size()) == masked_count &&
                cand.bits.size() == cand.positions.size() * static_cast<std::size_t>(k) &&
                cand.probs.size() == cand.bits.size(),
            ErrorKind::Internal, "predictor returned candidates that do not cover the masked positions");
    const int target = remaining[static_cast<std::size_t>(i - 1)];
    const int count = masked_count - target;

    std::vector<double> scores;
    std::vector<int> chosen;
    switch (config.order) {
      case SampleOrder::Entropy:
        scores = confidence_scores(cand.probs, k, config.confidence, config.temperature, rng);
        chosen = top_k(scores, count);
        break;
      case SampleOrder::Raster:
        scores = confidence_scores(cand.probs, k, config.confidence, 0.0, rng);
        chosen.resize(static_cast<std::size_t>(count));
        std::iota(chosen.begin(), chosen.end(), 0);
        break;
      case SampleOrder::Random: {
        scores = confidence_scores(cand.probs, k, config.confidence, 0.0, rng);
        std::vector<int> idx(cand.positions.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (int a = 0; a < count; ++a) {
          const int b = a + static_cast<int>(rng.below(static_cast<std::uint64_t>(idx.size() - a)));
          std::swap(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
        chosen.assign(idx.begin(), idx.begin() + count);
        break;
      }
    }

    SampleTrace::Iteration rec;
    rec.index = i;
    rec.remaining = target;
    rec.candidates = cand.positions;
    rec.scores = scores;
    for (int c : chosen) {
      const int pos = cand.positions[static_cast<std::size_t>(c)];
      if (!masked[static_cast<std::size_t>(pos)]) fail(ErrorKind::Internal, "position selected twice");
      result.grid.set_code(pos, std::span<const std::uint8_t>(cand.bits).subspan(static_cast<std::size_t>(c) * k,
                                                                                   static_cast<std::size_t>(k)));
      masked[static_cast<std::size_t>(pos)] = 0;
      rec.unmasked.push_back(pos);
    }
    std::sort(rec.unmasked.begin(), rec.unmasked.end());
    masked_count = target;
    rec.grid = result.grid;
    result.trace.iterations.push_back(std::move(rec));
  }
  if (masked_count != 0) fail(ErrorKind::Internal, "unmask schedule exhausted with masked positions left");
  return result;
}

namespace {

// Largest divisor of n not above sqrt(n): 16 -> 4x4, 8 -> 2x4.
std::pair<int, int> grid_shape(int n) {
  int h = static_cast<int>(std::sqrt(static_cast<double>(n)));
  while (h > 1 && n % h != 0) --h;
  return {h, n / h};
}

}  // namespace

template <class T>
SampleResult generate(const GenerativeModel<T>& model, const GenerateRequest& request, const SamplerConfig& config,
                      Rng& rng) {
  config.validate();
  const int n = model.seq_len();
  const int k = model.code_bits();
  const int d = model.config().backbone.dim;
  const int uncond = model.uncond_id();
  require(request.class_id >= 0 && request.class_id <= uncond, ErrorKind::InvalidInput,
          "class id " + std::to_string(request.class_id) + " is outside [0, " + std::to_string(uncond) + "]");
  require(!request.cond_embedding || static_cast<int>(request.cond_embedding->size()) == d,
          ErrorKind::InvalidInput, "condition embedding has the wrong width");
  auto check_grid = [&](const BinaryCodeGrid& g, const char* what) {
    require(g.size() == n && g.bits_per_code() == k && g.valid(), ErrorKind::InvalidInput,
            std::string(what) + " grid does not match the model");
  };
  BinaryCodeGrid initial;
  if (request.initial) {
    check_grid(*request.initial, "initial");
    initial = *request.initial;
  } else {
    const auto [h, w] = grid_shape(n);
    initial = BinaryCodeGrid(h, w, k);
  }
  if (request.first_candidates) check_grid(*request.first_candidates, "candidate");
  std::vector<std::uint8_t> masked = request.generate;
  if (masked.empty()) masked.assign(static_cast<std::size_t>(n), 1);
  require(static_cast<int>(masked.size()) == n, ErrorKind::InvalidInput, "generate mask does not match the model");

  const NoiseSchedule schedule = respace_schedule(model.schedule(), std::min(config.inference_steps,
                                                                             model.schedule().steps()));
  const bool is_uncond = request.class_id == uncond && !request.cond_embedding;
  DenoiseOptions options;
  options.guidance.scale = config.cfg_scale;
  options.guidance.enabled = !is_uncond && config.cfg_scale != 1.0;
  options.deterministic = config.deterministic;

  nn::Matrix<T> cond_row(1, d);
  if (request.cond_embedding) {
    for (int j = 0; j < d; ++j) cond_row(0, j) = static_cast<T>((*request.cond_embedding)[static_cast<std::size_t>(j)]);
  } else {
    cond_row = model.backbone().class_table().row(request.class_id);
  }
  const nn::Matrix<T> uncond_row = model.backbone().class_table().row(uncond);

  auto features = [&](nn::Tape<T>& tape, const BinaryCodeGrid& grid, std::span<const std::uint8_t> mask,
                      const nn::Matrix<T>& cond, const std::vector<int>& rows) {
    nn::Var c = tape.constant(cond);
    nn::Var codes = tape.constant(codes_to_signed_rows<T>(std::span<const BinaryCodeGrid>(&grid, 1)));
    nn::Var emb = model.backbone().embed_sequence(tape, codes, mask, c);
    const BackboneOutput out = model.backbone().forward(tape, emb, c);
    return nn::Matrix<T>(tape.value(nn::gather_rows(tape, out.final, rows)));
  };

  auto predict = [&](const BinaryCodeGrid& grid, std::span<const std::uint8_t> mask, int iteration) {
    Candidates cand;
    std::vector<int> rows;
    for (int p = 0; p < n; ++p) {
      if (mask[static_cast<std::size_t>(p)]) {
        cand.positions.push_back(p);
        rows.push_back(p + 1);
      }
    }
    nn::Tape<T> tape(false);
    const nn::Matrix<T> h_cond = features(tape, grid, mask, cond_row, rows);
    nn::Matrix<T> h_uncond;
    if (options.guidance.enabled) h_uncond = features(tape, grid, mask, uncond_row, rows);
    const DenoiseResult dr = denoise_sample(model.transcoder(), h_cond,
                                            options.guidance.enabled ? &h_uncond : nullptr, schedule, options, rng);
    cand.bits = dr.bits;
    cand.probs = dr.probs;
    if (iteration == 1 && request.first_candidates) {
      for (std::size_t i = 0; i < cand.positions.size(); ++i) {
        const auto c = request.first_candidates->code(cand.positions[i]);
        std::copy(c.begin(), c.end(), cand.bits.begin() + static_cast<std::ptrdiff_t>(i * k));
      }
    }
    return cand;
  };
  return run_unmask_loop(std::move(initial), std::move(masked), config, rng, predict);
}

template SampleResult generate(const GenerativeModel<float>&, const GenerateRequest&, const SamplerConfig&, Rng&);
template SampleResult generate(const GenerativeModel<double>&, const GenerateRequest&, const SamplerConfig&, Rng&);

}  // namespace bigr

#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "bigr/image.hpp"
#include "bigr/sampler.hpp"
#include "bigr/tokenizer.hpp"

namespace bigr {

// Token-resolution region; 1 = generate.
struct RegionMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> cells;

  int count() const;
};

// Plain text, one row per line of '0' / '1' characters. '#' lines are comments.
RegionMask parse_region_mask(std::string_view text);
RegionMask load_region_mask(const std::filesystem::path& path);
std::string format_region_mask(const RegionMask& region);

// Pixel mask (1 channel, > 0.5 = generate) to token resolution by majority
// vote over each factor x factor block; ties count as "generate".
RegionMask region_from_pixels(const Image& mask, int factor);

struct ZeroShotOutput {
  Image image;
  BinaryCodeGrid codes;
  SampleTrace trace;
};

// Tokens outside the region keep encode(image); tokens inside are sampled.
// class_id = num_classes gives inpainting / outpainting, a class id gives editing.
template <class T>
ZeroShotOutput infill(const Tokenizer<T>& tokenizer, const GenerativeModel<T>& model, const Image& image,
                      const RegionMask& region, int class_id, const SamplerConfig& config, Rng& rng);

// Condition embedding (1 - lambda) emb(a) + lambda emb(b).
template <class T>
std::vector<double> interpolated_embedding(const GenerativeModel<T>& model, int class_a, int class_b, double lambda);

template <class T>
ZeroShotOutput interpolate_classes(const Tokenizer<T>& tokenizer, const GenerativeModel<T>& model, int class_a,
                                   int class_b, double lambda, const SamplerConfig& config, Rng& rng);

// Half-resolution input: bilinear upsample, encode, then regenerate every
// token under the unconditional token with the upsampled codes as the
// first iteration's candidates.
template <class T>
ZeroShotOutput enrich(const Tokenizer<T>& tokenizer, const GenerativeModel<T>& model, const Image& low,
                      const SamplerConfig& config, Rng& rng);

}  // namespace bigr

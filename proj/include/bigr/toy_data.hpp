#pragma once

#include <cstdint>

#include "bigr/rng.hpp"
#include "bigr/store_io.hpp"

namespace bigr {

// Procedural 10-class RGB dataset: a soft-edged foreground shape whose form
// and hue identify the class, on a smooth two-color background gradient.
// Labels cycle 0..9 so every class is equally represented.
struct ToyDataConfig {
  int count = 6000;
  int size = 32;
  int num_classes = 10;
  std::uint64_t seed = 0;
};

Dataset make_toy_dataset(const ToyDataConfig& config);

// Renders one sample of `label` from the given stream.
Image render_toy_image(int label, int size, Rng& rng);

}  // namespace bigr

#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace bigr {

// Pixels are stored interleaved (HWC), values in [0, 1].
struct Image {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w) : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return pixels.size(); }

  // Shape consistent and every pixel finite and within [0, 1].
  bool valid() const;

  bool operator==(const Image&) const = default;
};

void clamp_unit(Image& image);

double mse(const Image& a, const Image& b);
// Peak signal-to-noise ratio for unit-range images, in dB.
double psnr(const Image& a, const Image& b);

Image resize_bilinear(const Image& image, int height, int width);

// Block-averaging downsample by an integer factor.
Image downsample_box(const Image& image, int factor);

// Tiles images row-major into a grid with `columns` columns.
Image tile_images(std::span<const Image> images, int columns);

// Binary PPM (P6) for RGB, PGM (P5) for grayscale.
void write_pnm(const std::filesystem::path& path, const Image& image);
Image read_pnm(const std::filesystem::path& path);

}  // namespace bigr

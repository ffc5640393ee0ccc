#include "bigr/toy_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "bigr/errors.hpp"
#include "bigr/rng.hpp"

namespace bigr {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Signed-distance-like coverage in [0, 1]; `d` is negative inside.
double soft(double d, double softness) { return std::clamp(0.5 - d / softness, 0.0, 1.0); }

struct ShapeParams {
  double cx, cy, r, angle, phase;
};

// Foreground coverage of class `label` at pixel center (x, y).
double coverage(int label, double x, double y, const ShapeParams& s) {
  const double dx = x - s.cx, dy = y - s.cy;
  const double ca = std::cos(s.angle), sa = std::sin(s.angle);
  const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
  const double soft_edge = 1.5;
  switch (label) {
    case 0:  // disk
      return soft(std::hypot(dx, dy) - s.r, soft_edge);
    case 1:  // rotated square
      return soft(std::max(std::abs(u), std::abs(v)) - 0.8 * s.r, soft_edge);
    case 2: {  // triangle (intersection of three half-planes)
      double d = -1e9;
      for (int k = 0; k < 3; ++k) {
        const double a = s.angle + k * 2.0 * kPi / 3.0;
        d = std::max(d, std::cos(a) * dx + std::sin(a) * dy - 0.55 * s.r);
      }
      return soft(d, soft_edge);
    }
    case 3:  // horizontal bands
      return 0.5 + 0.5 * std::sin(2.0 * kPi * y / 12.0 + s.phase);
    case 4:  // vertical bands
      return 0.5 + 0.5 * std::sin(2.0 * kPi * x / 12.0 + s.phase);
    case 5:  // ring
      return soft(std::abs(std::hypot(dx, dy) - s.r) - 0.3 * s.r, soft_edge);
    case 6:  // plus sign
      return soft(std::min(std::max(std::abs(u) - 0.3 * s.r, std::abs(v) - s.r),
                           std::max(std::abs(v) - 0.3 * s.r, std::abs(u) - s.r)),
                  soft_edge);
    case 7:  // diagonal half-plane split
      return soft(u, 3.0);
    case 8: {  // two small disks
      const double ox = 0.6 * s.r * ca, oy = 0.6 * s.r * sa;
      const double d1 = std::hypot(dx - ox, dy - oy), d2 = std::hypot(dx + ox, dy + oy);
      return soft(std::min(d1, d2) - 0.5 * s.r, soft_edge);
    }
    default:  // wide ellipse
      return soft(std::hypot(u / 1.6, v / 0.6) - s.r * 0.8, soft_edge);
  }
}

}  // namespace

Image render_toy_image(int label, int size, Rng& rng) {
  require(size >= 8, ErrorKind::InvalidInput, "toy images must be at least 8 pixels wide");
  Image im(3, size, size);
  // Background: a dim linear gradient between two nearby hues.
  const double bg_hue = rng.uniform();
  const auto bg_a = hsv_to_rgb(bg_hue, 0.35, 0.25);
  const auto bg_b = hsv_to_rgb(bg_hue + 0.15, 0.35, 0.35);
  const double ga = 2.0 * kPi * rng.uniform();
  const double gx = std::cos(ga), gy = std::sin(ga);
  // Foreground: class hue plus jitter, bright.
  const int classes = 10;
  const double hue = (label % classes) / static_cast<double>(classes) + 0.02 * (2.0 * rng.uniform() - 1.0);
  const auto fg = hsv_to_rgb(hue, 0.85, 0.9);
  const double scale = size / 32.0;
  ShapeParams sp{};
  sp.cx = size / 2.0 + (2.0 * rng.uniform() - 1.0) * 3.0 * scale;
  sp.cy = size / 2.0 + (2.0 * rng.uniform() - 1.0) * 3.0 * scale;
  sp.r = (9.0 + 2.0 * rng.uniform()) * scale;
  sp.angle = 2.0 * kPi * rng.uniform();
  sp.phase = 2.0 * kPi * rng.uniform();
  const double half = size / 2.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double g = std::clamp(0.5 + ((px - half) * gx + (py - half) * gy) / size, 0.0, 1.0);
      const double a = coverage(label % classes, px, py, sp);
      for (int c = 0; c < 3; ++c) {
        const double bg = (1.0 - g) * bg_a[c] + g * bg_b[c];
        im.at(y, x, c) = static_cast<float>(std::clamp((1.0 - a) * bg + a * fg[c], 0.0, 1.0));
      }
    }
  }
  return im;
}

Dataset make_toy_dataset(const ToyDataConfig& config) {
  require(config.count >= 1, ErrorKind::InvalidInput, "toy dataset needs at least one sample");
  require(config.num_classes >= 1 && config.num_classes <= 10, ErrorKind::InvalidInput,
          "toy dataset supports 1..10 classes");
  Dataset d;
  d.channels = 3;
  d.height = config.size;
  d.width = config.size;
  d.num_classes = config.num_classes;
  d.images.reserve(config.count);
  d.labels.reserve(config.count);
  for (int i = 0; i < config.count; ++i) {
    const int label = i % config.num_classes;
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    d.images.push_back(render_toy_image(label, config.size, rng));
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace bigr

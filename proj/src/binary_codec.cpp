#include "bigr/binary_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bigr/errors.hpp"

namespace bigr {

namespace {

void check_width(int bits_per_code) {
  if (bits_per_code > kMaxCodeWidth) {
    fail(ErrorKind::UnsupportedWidth,
         "code width " + std::to_string(bits_per_code) + " exceeds the 32-bit limit");
  }
  require(bits_per_code >= 1, ErrorKind::InvalidInput, "code width must be positive");
}

}  // namespace

BinaryCodeGrid::BinaryCodeGrid(int height, int width, int bits_per_code)
    : BinaryCodeGrid(height, width, bits_per_code,
                     std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width *
                                               std::max(bits_per_code, 0))) {}

BinaryCodeGrid::BinaryCodeGrid(int height, int width, int bits_per_code,
                               std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_per_code_(bits_per_code), bits_(std::move(bits)) {
  require(height >= 1 && width >= 1, ErrorKind::InvalidInput, "grid dimensions must be positive");
  check_width(bits_per_code);
  require(bits_.size() == static_cast<std::size_t>(height) * width * bits_per_code,
          ErrorKind::InvalidInput, "grid bit buffer has the wrong length");
}

std::span<std::uint8_t> BinaryCodeGrid::code(int position) {
  return std::span<std::uint8_t>(bits_).subspan(
      static_cast<std::size_t>(position) * bits_per_code_, bits_per_code_);
}

std::span<const std::uint8_t> BinaryCodeGrid::code(int position) const {
  return std::span<const std::uint8_t>(bits_).subspan(
      static_cast<std::size_t>(position) * bits_per_code_, bits_per_code_);
}

BinaryCode BinaryCodeGrid::code_copy(int position) const {
  auto c = code(position);
  return BinaryCode{{c.begin(), c.end()}};
}

void BinaryCodeGrid::set_code(int position, std::span<const std::uint8_t> bits) {
  require(static_cast<int>(bits.size()) == bits_per_code_, ErrorKind::InvalidInput,
          "code width does not match the grid");
  std::copy(bits.begin(), bits.end(), code(position).begin());
}

bool BinaryCodeGrid::valid() const {
  if (height_ < 1 || width_ < 1 || bits_per_code_ < 1 || bits_per_code_ > kMaxCodeWidth) return false;
  if (bits_.size() != static_cast<std::size_t>(height_) * width_ * bits_per_code_) return false;
  return std::all_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b <= 1; });
}

BinaryCodeGrid quantize_sign(const LatentGrid& latents) {
  require(latents.values.size() ==
              static_cast<std::size_t>(latents.height) * latents.width * latents.bits_per_code,
          ErrorKind::InvalidInput, "latent buffer has the wrong length");
  BinaryCodeGrid grid(latents.height, latents.width, latents.bits_per_code);
  auto out = grid.bits();
  for (std::size_t i = 0; i < latents.values.size(); ++i) {
    const double v = latents.values[i];
    require(std::isfinite(v), ErrorKind::InvalidInput,
            "non-finite latent value at index " + std::to_string(i));
    out[i] = v > 0.0 ? 1 : 0;
  }
  return grid;
}

void quantize_sign(std::span<const float> values, std::span<std::uint8_t> bits) {
  require(values.size() == bits.size(), ErrorKind::InvalidInput, "size mismatch in quantize_sign");
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(std::isfinite(values[i]), ErrorKind::InvalidInput,
            "non-finite latent value at index " + std::to_string(i));
    bits[i] = values[i] > 0.0f ? 1 : 0;
  }
}

std::uint32_t code_to_index(std::span<const std::uint8_t> bits) {
  check_width(static_cast<int>(bits.size()));
  std::uint32_t index = 0;
  for (std::size_t k = 0; k < bits.size(); ++k) {
    require(bits[k] <= 1, ErrorKind::InvalidInput, "code bits must be 0 or 1");
    index |= static_cast<std::uint32_t>(bits[k]) << k;
  }
  return index;
}

std::uint32_t code_to_index(const BinaryCode& code) { return code_to_index(code.bits); }

BinaryCode index_to_code(std::uint64_t index, int bits_per_code) {
  check_width(bits_per_code);
  require(index < (std::uint64_t{1} << bits_per_code), ErrorKind::InvalidInput,
          "index " + std::to_string(index) + " out of range for " + std::to_string(bits_per_code) +
              "-bit codes");
  BinaryCode code;
  code.bits.resize(bits_per_code);
  for (int k = 0; k < bits_per_code; ++k) code.bits[k] = (index >> k) & 1u;
  return code;
}

}  // namespace bigr

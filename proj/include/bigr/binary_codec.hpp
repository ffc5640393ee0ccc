#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace bigr {

inline constexpr int kMaxCodeWidth = 32;

// One K-bit code; bits[k] is bit k+1 in the 1-based indexing of the index
// formula, so bits[0] is the least-significant bit of the token index.
struct BinaryCode {
  std::vector<std::uint8_t> bits;

  int width() const { return static_cast<int>(bits.size()); }
  bool operator==(const BinaryCode&) const = default;
};

// h*w codes in row-major order, all sharing the same bit width.
class BinaryCodeGrid {
 public:
  BinaryCodeGrid() = default;
  BinaryCodeGrid(int height, int width, int bits_per_code);
  BinaryCodeGrid(int height, int width, int bits_per_code, std::vector<std::uint8_t> bits);

  int height() const { return height_; }
  int width() const { return width_; }
  int bits_per_code() const { return bits_per_code_; }
  int size() const { return height_ * width_; }

  std::span<std::uint8_t> code(int position);
  std::span<const std::uint8_t> code(int position) const;
  BinaryCode code_copy(int position) const;
  void set_code(int position, std::span<const std::uint8_t> bits);

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }

  // True when every entry is 0 or 1 and the buffer length matches h*w*K.
  bool valid() const;

  bool operator==(const BinaryCodeGrid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int bits_per_code_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Pre-quantization latents, h*w vectors of K reals.
struct LatentGrid {
  int height = 0;
  int width = 0;
  int bits_per_code = 0;
  std::vector<double> values;
};

// bit = 1 iff value > 0. Zero maps to 0.
BinaryCodeGrid quantize_sign(const LatentGrid& latents);
void quantize_sign(std::span<const float> values, std::span<std::uint8_t> bits);

std::uint32_t code_to_index(const BinaryCode& code);
std::uint32_t code_to_index(std::span<const std::uint8_t> bits);
BinaryCode index_to_code(std::uint64_t index, int bits_per_code);

// {0,1} -> {-1,+1}
inline double to_signed(std::uint8_t bit) { return bit ? 1.0 : -1.0; }

}  // namespace bigr

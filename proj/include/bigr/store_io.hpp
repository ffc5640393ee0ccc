#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bigr/image.hpp"

namespace bigr {

// ---------------------------------------------------------------------------
// Dataset container "BGRD"
//
//   "BGRD" | u32 version | u32 count | u32 c | u32 H | u32 W | u32 classes
//   count x ( u8 label | c*H*W f32 pixels, planar CHW )
//
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

enum class Split { Train, Val };

struct Dataset {
  int channels = 3;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  Split split = Split::Train;
  std::vector<Image> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kFeatureVersion = 1;

void validate_dataset(const Dataset& dataset);
std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::string_view bytes, Split split = Split::Train);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path, Split split = Split::Train);

// Deterministic permutation of [0, n) for a given shuffle seed.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoint container "BGRC"
//
//   "BGRC" | u32 version | u8 component | u32 len | config UTF-8 | u64 seed
//   | u32 array count | arrays... | u32 CRC32 of every preceding byte
//   array = u32 name len | name | u8 dtype | u32 rank | rank x u32 dims | payload
// ---------------------------------------------------------------------------

enum class Component : std::uint8_t { Tokenizer = 1, Model = 2 };
enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

std::string_view to_string(Component component);

struct NamedArray {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::uint32_t> dims;
  // Held as double; f32 payloads widen and narrow exactly.
  std::vector<double> values;

  std::size_t element_count() const;
  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  Component component = Component::Model;
  std::string config_text;
  std::uint64_t seed = 0;
  std::vector<NamedArray> arrays;

  const NamedArray* find(std::string_view name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<Component> expected = std::nullopt);

std::uint32_t crc32_of(std::string_view bytes);

// ---------------------------------------------------------------------------
// Feature export "BGRF"
//
//   "BGRF" | u32 version | u32 count | u32 dim | u32 layer
//   | count x dim f32 rows | count x u32 labels
// ---------------------------------------------------------------------------

struct FeatureTable {
  int layer = 0;
  int dim = 0;
  std::vector<float> rows;  // count * dim
  std::vector<std::uint32_t> labels;

  std::size_t count() const { return labels.size(); }
  bool operator==(const FeatureTable&) const = default;
};

std::string serialize_features(const FeatureTable& table);
FeatureTable parse_features(std::string_view bytes);
void save_features(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable load_features(const std::filesystem::path& path);

// Writes to a sibling temp file and renames into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace bigr

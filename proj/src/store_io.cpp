#include "bigr/store_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "bigr/errors.hpp"
#include "bigr/rng.hpp"

namespace bigr {

namespace {

constexpr std::string_view kDatasetMagic = "BGRD";
constexpr std::string_view kCheckpointMagic = "BGRC";
constexpr std::string_view kFeatureMagic = "BGRF";

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.append(s); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string_view what) : data_(data), what_(what) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string string() {
    const std::uint32_t n = u32();
    return std::string(bytes(n));
  }

  [[noreturn]] void error(const std::string& message) const { error_at(pos_, message); }

  [[noreturn]] void error_at(std::size_t offset, const std::string& message) const {
    fail(ErrorKind::Parse, std::string(what_) + ": " + message + " (byte offset " + std::to_string(offset) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) {
      error("unexpected end of data, needed " + std::to_string(n) + " bytes but " +
            std::to_string(remaining()) + " remain");
    }
  }

  std::string_view data_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

void expect_magic(ByteReader& in, std::string_view magic) {
  const std::size_t at = in.offset();
  if (in.remaining() < magic.size()) in.error("file too short for header");
  if (in.bytes(magic.size()) != magic) in.error_at(at, "bad magic, expected \"" + std::string(magic) + "\"");
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

void validate_dataset(const Dataset& d) {
  require(d.channels >= 1 && d.height >= 1 && d.width >= 1, ErrorKind::InvalidInput,
          "dataset image shape must be positive");
  require(d.num_classes >= 1 && d.num_classes <= 255, ErrorKind::InvalidInput,
          "dataset class count must be in [1, 255]");
  require(d.images.size() == d.labels.size(), ErrorKind::InvalidInput,
          "dataset image and label counts differ");
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    const Image& im = d.images[i];
    require(im.channels == d.channels && im.height == d.height && im.width == d.width,
            ErrorKind::InvalidInput, "record " + std::to_string(i) + " has a different image shape");
    require(d.labels[i] >= 0 && d.labels[i] < d.num_classes, ErrorKind::InvalidInput,
            "record " + std::to_string(i) + " has label " + std::to_string(d.labels[i]) +
                " outside [0, " + std::to_string(d.num_classes) + ")");
    require(im.valid(), ErrorKind::InvalidInput, "record " + std::to_string(i) + " has pixels outside [0, 1]");
  }
}

std::string serialize_dataset(const Dataset& d) {
  validate_dataset(d);
  ByteWriter out;
  out.bytes(kDatasetMagic);
  out.u32(kDatasetVersion);
  out.u32(static_cast<std::uint32_t>(d.size()));
  out.u32(static_cast<std::uint32_t>(d.channels));
  out.u32(static_cast<std::uint32_t>(d.height));
  out.u32(static_cast<std::uint32_t>(d.width));
  out.u32(static_cast<std::uint32_t>(d.num_classes));
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.u8(static_cast<std::uint8_t>(d.labels[i]));
    const Image& im = d.images[i];
    for (int c = 0; c < im.channels; ++c) {
      for (int y = 0; y < im.height; ++y) {
        for (int x = 0; x < im.width; ++x) out.f32(im.at(y, x, c));
      }
    }
  }
  return std::move(out.buffer());
}

Dataset parse_dataset(std::string_view bytes, Split split) {
  ByteReader in(bytes, "dataset");
  expect_magic(in, kDatasetMagic);
  const std::size_t version_at = in.offset();
  const std::uint32_t version = in.u32();
  if (version != kDatasetVersion) {
    in.error_at(version_at, "unsupported dataset version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  Dataset d;
  d.split = split;
  const std::size_t shape_at = in.offset();
  d.channels = static_cast<int>(in.u32());
  d.height = static_cast<int>(in.u32());
  d.width = static_cast<int>(in.u32());
  d.num_classes = static_cast<int>(in.u32());
  if (d.channels < 1 || d.channels > 4 || d.height < 1 || d.width < 1 || d.height > 4096 || d.width > 4096) {
    in.error_at(shape_at, "implausible image shape");
  }
  if (d.num_classes < 1 || d.num_classes > 255) in.error_at(shape_at + 12, "class count must be in [1, 255]");
  const std::size_t pixels = static_cast<std::size_t>(d.channels) * d.height * d.width;
  const std::size_t record = 1 + 4 * pixels;
  if (in.remaining() != record * count) {
    in.error("length mismatch: header declares " + std::to_string(count) + " records of " +
             std::to_string(record) + " bytes but " + std::to_string(in.remaining()) + " bytes follow");
  }
  d.images.reserve(count);
  d.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const int label = in.u8();
    if (label >= d.num_classes) {
      fail(ErrorKind::InvalidInput, "dataset record " + std::to_string(i) + " has label " + std::to_string(label) +
                                        " but the file declares " + std::to_string(d.num_classes) + " classes");
    }
    Image im(d.channels, d.height, d.width);
    for (int c = 0; c < d.channels; ++c) {
      for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
          const std::size_t at = in.offset();
          const float v = in.f32();
          if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
            in.error_at(at, "record " + std::to_string(i) + " has a pixel outside [0, 1]");
          }
          im.at(y, x, c) = v;
        }
      }
    }
    d.images.push_back(std::move(im));
    d.labels.push_back(label);
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path, Split split) {
  const std::string bytes = read_file(path);
  try {
    return parse_dataset(bytes, split);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5348554646ull));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

std::string_view to_string(Component component) {
  switch (component) {
    case Component::Tokenizer: return "tokenizer";
    case Component::Model: return "model";
  }
  return "unknown";
}

std::size_t NamedArray::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const NamedArray* Checkpoint::find(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  ByteWriter out;
  out.bytes(kCheckpointMagic);
  out.u32(ck.version);
  out.u8(static_cast<std::uint8_t>(ck.component));
  out.string(ck.config_text);
  out.u64(ck.seed);
  out.u32(static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& a : ck.arrays) {
    require(a.values.size() == a.element_count(), ErrorKind::Internal,
            "array " + a.name + " payload does not match its dims");
    out.string(a.name);
    out.u8(static_cast<std::uint8_t>(a.dtype));
    out.u32(static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) out.u32(d);
    for (double v : a.values) {
      if (a.dtype == DType::F32) {
        out.f32(static_cast<float>(v));
      } else {
        out.f64(v);
      }
    }
  }
  out.u32(crc32_of(out.buffer()));
  return std::move(out.buffer());
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  ByteReader in(bytes, "checkpoint");
  expect_magic(in, kCheckpointMagic);
  Checkpoint ck;
  const std::size_t version_at = in.offset();
  ck.version = in.u32();
  if (ck.version != kCheckpointVersion) {
    fail(ErrorKind::CheckpointIncompatible,
         "checkpoint format version " + std::to_string(ck.version) + " is not supported (this build reads version " +
             std::to_string(kCheckpointVersion) + "; byte offset " + std::to_string(version_at) + ")");
  }
  if (bytes.size() < 4 + 4 + 4) in.error("file too short");
  // Integrity first so corrupted payloads never reach the array decoder.
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  ByteReader tail(bytes.substr(bytes.size() - 4), "checkpoint");
  const std::uint32_t stored = tail.u32();
  const std::uint32_t actual = crc32_of(body);
  if (stored != actual) {
    fail(ErrorKind::Parse, "checkpoint: CRC32 mismatch (stored " + std::to_string(stored) + ", computed " +
                               std::to_string(actual) + "); the file is corrupt or truncated");
  }
  ByteReader payload(body, "checkpoint");
  payload.bytes(8);  // magic + version, already checked
  const std::size_t comp_at = payload.offset();
  const std::uint8_t comp = payload.u8();
  if (comp != static_cast<std::uint8_t>(Component::Tokenizer) && comp != static_cast<std::uint8_t>(Component::Model)) {
    payload.error_at(comp_at, "unknown component tag " + std::to_string(comp));
  }
  ck.component = static_cast<Component>(comp);
  ck.config_text = payload.string();
  ck.seed = payload.u64();
  const std::uint32_t count = payload.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = payload.string();
    const std::size_t dtype_at = payload.offset();
    const std::uint8_t dt = payload.u8();
    if (dt > 1) payload.error_at(dtype_at, "unknown dtype " + std::to_string(dt) + " for array " + a.name);
    a.dtype = static_cast<DType>(dt);
    const std::uint32_t rank = payload.u32();
    if (rank > 8) payload.error("implausible rank for array " + a.name);
    for (std::uint32_t r = 0; r < rank; ++r) a.dims.push_back(payload.u32());
    const std::size_t n = a.element_count();
    const std::size_t width = a.dtype == DType::F32 ? 4 : 8;
    if (n > payload.remaining() / width) payload.error("array " + a.name + " extends past end of file");
    a.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) a.values[j] = a.dtype == DType::F32 ? payload.f32() : payload.f64();
    ck.arrays.push_back(std::move(a));
  }
  if (payload.remaining() != 0) payload.error("trailing bytes after arrays");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<Component> expected) {
  const std::string bytes = read_file(path);
  Checkpoint ck;
  try {
    ck = parse_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
  if (expected && ck.component != *expected) {
    fail(ErrorKind::CheckpointIncompatible, path.string() + ": expected a " + std::string(to_string(*expected)) +
                                                " checkpoint but found a " + std::string(to_string(ck.component)) +
                                                " checkpoint");
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

std::string serialize_features(const FeatureTable& t) {
  require(t.rows.size() == t.count() * static_cast<std::size_t>(t.dim), ErrorKind::InvalidInput,
          "feature rows do not match count x dim");
  ByteWriter out;
  out.bytes(kFeatureMagic);
  out.u32(kFeatureVersion);
  out.u32(static_cast<std::uint32_t>(t.count()));
  out.u32(static_cast<std::uint32_t>(t.dim));
  out.u32(static_cast<std::uint32_t>(t.layer));
  for (float v : t.rows) out.f32(v);
  for (auto l : t.labels) out.u32(l);
  return std::move(out.buffer());
}

FeatureTable parse_features(std::string_view bytes) {
  ByteReader in(bytes, "features");
  expect_magic(in, kFeatureMagic);
  const std::size_t version_at = in.offset();
  const std::uint32_t version = in.u32();
  if (version != kFeatureVersion) in.error_at(version_at, "unsupported feature file version " + std::to_string(version));
  const std::uint32_t count = in.u32();
  FeatureTable t;
  t.dim = static_cast<int>(in.u32());
  t.layer = static_cast<int>(in.u32());
  const std::size_t expected = static_cast<std::size_t>(count) * t.dim * 4 + static_cast<std::size_t>(count) * 4;
  if (in.remaining() != expected) {
    in.error("length mismatch: expected " + std::to_string(expected) + " payload bytes, found " +
             std::to_string(in.remaining()));
  }
  t.rows.resize(static_cast<std::size_t>(count) * t.dim);
  for (float& v : t.rows) v = in.f32();
  t.labels.resize(count);
  for (auto& l : t.labels) l = in.u32();
  return t;
}

void save_features(const FeatureTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_features(table));
}

FeatureTable load_features(const std::filesystem::path& path) { return parse_features(read_file(path)); }

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Load, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(static_cast<bool>(out), ErrorKind::Load, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::Load, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Load, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace bigr

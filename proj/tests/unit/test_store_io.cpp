#include "doctest.h"

#include <filesystem>
#include <functional>

#include "bigr/errors.hpp"
#include "bigr/image.hpp"
#include "bigr/store_io.hpp"
#include "bigr/toy_data.hpp"

using namespace bigr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bigr_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Internal;
}

}  // namespace

TEST_CASE("toy dataset is balanced, valid and seed-determined") {
  const Dataset a = make_toy_dataset({40, 32, 10, 3});
  const Dataset b = make_toy_dataset({40, 32, 10, 3});
  const Dataset c = make_toy_dataset({40, 32, 10, 4});
  CHECK(a.size() == 40);
  std::vector<int> counts(10, 0);
  for (int l : a.labels) ++counts[static_cast<std::size_t>(l)];
  for (int n : counts) CHECK(n == 4);
  for (const auto& im : a.images) CHECK(im.valid());
  CHECK(a.images == b.images);
  CHECK(a.images != c.images);
}

TEST_CASE("dataset round-trip is bit-exact") {
  const Dataset d = make_toy_dataset({12, 16, 10, 1});
  const std::string bytes = serialize_dataset(d);
  const Dataset back = parse_dataset(bytes);
  CHECK(back.images == d.images);
  CHECK(back.labels == d.labels);
  CHECK(serialize_dataset(back) == bytes);
  const fs::path dir = temp_dir("dataset");
  save_dataset(d, dir / "d.bgrd");
  CHECK(load_dataset(dir / "d.bgrd").images == d.images);
  CHECK(kind_of([&] { parse_dataset(bytes.substr(0, bytes.size() - 3)); }) == ErrorKind::Parse);
  CHECK(kind_of([&] { parse_dataset("XXXX" + bytes.substr(4)); }) == ErrorKind::Parse);
  CHECK(kind_of([&] { load_dataset(dir / "missing.bgrd"); }) == ErrorKind::Load);
}

TEST_CASE("dataset validation") {
  Dataset d = make_toy_dataset({4, 16, 10, 1});
  d.labels[0] = 10;
  CHECK_THROWS_AS(validate_dataset(d), Error);
  d = make_toy_dataset({4, 16, 10, 1});
  d.images[1].pixels[0] = 1.5f;
  CHECK_THROWS_AS(validate_dataset(d), Error);
}

TEST_CASE("checkpoint round-trip with CRC verification") {
  Checkpoint ck;
  ck.component = Component::Model;
  ck.config_text = "layers = 2\n";
  ck.seed = 42;
  ck.arrays.push_back({"a", DType::F32, {2, 3}, {1, 2, 3, 4, 5, 0.25}});
  ck.arrays.push_back({"b", DType::F64, {1}, {0.1}});
  const std::string bytes = serialize_checkpoint(ck);
  CHECK(parse_checkpoint(bytes) == ck);
  CHECK(serialize_checkpoint(parse_checkpoint(bytes)) == bytes);
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  CHECK(kind_of([&] { parse_checkpoint(flipped); }) == ErrorKind::Parse);
  std::string future = bytes;
  future[4] = 9;
  CHECK(kind_of([&] { parse_checkpoint(future); }) == ErrorKind::CheckpointIncompatible);
  const fs::path dir = temp_dir("ckpt");
  save_checkpoint(ck, dir / "m.bgrc");
  CHECK(load_checkpoint(dir / "m.bgrc", Component::Model) == ck);
  CHECK(kind_of([&] { load_checkpoint(dir / "m.bgrc", Component::Tokenizer); }) == ErrorKind::CheckpointIncompatible);
  CHECK(ck.find("b") != nullptr);
  CHECK(ck.find("c") == nullptr);
}

TEST_CASE("crc32 reference value") { CHECK(crc32_of("123456789") == 0xCBF43926u); }

TEST_CASE("feature table round-trip") {
  FeatureTable t;
  t.layer = 2;
  t.dim = 3;
  t.rows = {1, 2, 3, 4, 5, 6};
  t.labels = {0, 7};
  CHECK(parse_features(serialize_features(t)) == t);
  const fs::path dir = temp_dir("features");
  save_features(t, dir / "f.bgrf");
  CHECK(load_features(dir / "f.bgrf") == t);
  t.rows.pop_back();
  CHECK_THROWS_AS(serialize_features(t), Error);
}

TEST_CASE("shuffled order is a seeded permutation") {
  auto a = shuffled_order(100, 3);
  CHECK(a == shuffled_order(100, 3));
  CHECK(a != shuffled_order(100, 4));
  std::sort(a.begin(), a.end());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == i);
}

TEST_CASE("image helpers") {
  const Dataset d = make_toy_dataset({2, 16, 10, 1});
  const fs::path dir = temp_dir("pnm");
  write_pnm(dir / "a.ppm", d.images[0]);
  const Image back = read_pnm(dir / "a.ppm");
  CHECK(back.height == 16);
  CHECK(psnr(back, d.images[0]) > 45.0);
  CHECK(mse(d.images[0], d.images[0]) == 0.0);
  const Image small = downsample_box(d.images[0], 2);
  CHECK(small.height == 8);
  CHECK(resize_bilinear(small, 16, 16).valid());
  CHECK(tile_images(d.images, 2).width == 32);
  CHECK(kind_of([&] { read_pnm(dir / "nope.ppm"); }) == ErrorKind::Load);
}

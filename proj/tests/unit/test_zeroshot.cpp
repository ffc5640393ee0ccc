#include "doctest.h"

#include "bigr/toy_data.hpp"
#include "bigr/zeroshot.hpp"
#include "fixtures.hpp"

using namespace bigr;

namespace {

TokenizerConfig tiny_tokenizer() {
  TokenizerConfig c;
  c.image_size = 16;
  c.downsample = 8;
  c.code_bits = 6;
  c.widths = {4, 8, 8};
  return c;
}

SamplerConfig quick_sampler() {
  SamplerConfig s;
  s.iterations = 2;
  s.inference_steps = 4;
  return s;
}

}  // namespace

TEST_CASE("region mask parsing") {
  const RegionMask r = parse_region_mask("# comment\n01\n 11 \r\n");
  CHECK(r.height == 2);
  CHECK(r.width == 2);
  CHECK(r.count() == 3);
  CHECK(format_region_mask(r) == "01\n11\n");
  CHECK_THROWS_AS(parse_region_mask("01\n1\n"), Error);
  CHECK_THROWS_AS(parse_region_mask("02\n"), Error);
  CHECK_THROWS_AS(parse_region_mask("# only\n"), Error);
}

TEST_CASE("pixel masks reduce to token regions by majority") {
  Image m(1, 4, 4);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) m.at(y, x, 0) = 1.0f;
  }
  m.at(2, 0, 0) = 1.0f;
  m.at(3, 0, 0) = 1.0f;  // half of the lower-left block
  const RegionMask r = region_from_pixels(m, 2);
  CHECK(r.cells == std::vector<std::uint8_t>{1, 1, 1, 0});
  CHECK_THROWS_AS(region_from_pixels(m, 3), Error);
}

TEST_CASE("infill keeps tokens outside the region") {
  const Tokenizer<float> tok(tiny_tokenizer(), 1);
  GenerativeModel<float> model(fixture::mini_model(), 2);
  oracle::randomize(model.params(), 3, 0.1);
  const Image image = make_toy_dataset({1, 16, 10, 5}).images[0];
  const BinaryCodeGrid before = tok.encode(image);
  const RegionMask region = parse_region_mask("10\n01\n");
  for (int cls : {1, model.uncond_id()}) {
    Rng rng(4);
    const auto out = infill(tok, model, image, region, cls, quick_sampler(), rng);
    CHECK(out.image.valid());
    CHECK(out.codes.code_copy(1) == before.code_copy(1));
    CHECK(out.codes.code_copy(2) == before.code_copy(2));
    int generated = 0;
    for (const auto& it : out.trace.iterations) generated += static_cast<int>(it.unmasked.size());
    CHECK(generated == 2);
  }
  Rng rng(1);
  CHECK_THROWS_AS(infill(tok, model, image, parse_region_mask("11\n11\n"), 0, quick_sampler(), rng), Error);
  CHECK_THROWS_AS(infill(tok, model, image, parse_region_mask("111\n111\n"), 0, quick_sampler(), rng), Error);
}

TEST_CASE("interpolated embeddings hit the endpoints exactly") {
  GenerativeModel<float> model(fixture::mini_model(), 2);
  const auto& table = model.backbone().class_table();
  const auto e0 = interpolated_embedding(model, 0, 2, 0.0);
  const auto e1 = interpolated_embedding(model, 0, 2, 1.0);
  const auto mid = interpolated_embedding(model, 0, 2, 0.5);
  for (int j = 0; j < 16; ++j) {
    CHECK(e0[static_cast<std::size_t>(j)] == static_cast<double>(table(0, j)));
    CHECK(e1[static_cast<std::size_t>(j)] == static_cast<double>(table(2, j)));
    CHECK(mid[static_cast<std::size_t>(j)] == doctest::Approx(0.5 * (table(0, j) + table(2, j))));
  }
  CHECK_THROWS_AS(interpolated_embedding(model, 0, 3, 0.5), Error);
  CHECK_THROWS_AS(interpolated_embedding(model, 0, 1, 1.5), Error);
}

TEST_CASE("interpolation at lambda = 0 reproduces class generation") {
  const Tokenizer<float> tok(tiny_tokenizer(), 1);
  GenerativeModel<float> model(fixture::mini_model(), 2);
  oracle::randomize(model.params(), 3, 0.1);
  Rng a(7), b(7);
  const auto mixed = interpolate_classes(tok, model, 1, 2, 0.0, quick_sampler(), a);
  GenerateRequest req;
  req.class_id = 1;
  CHECK(mixed.codes == generate(model, req, quick_sampler(), b).grid);
}

TEST_CASE("enrich checks the input size and returns a full-size image") {
  const Tokenizer<float> tok(tiny_tokenizer(), 1);
  GenerativeModel<float> model(fixture::mini_model(), 2);
  const Image low = downsample_box(make_toy_dataset({1, 16, 10, 5}).images[0], 2);
  Rng rng(3);
  const auto out = enrich(tok, model, low, quick_sampler(), rng);
  CHECK(out.image.height == 16);
  CHECK(out.codes.valid());
  CHECK_THROWS_AS(enrich(tok, model, make_toy_dataset({1, 16, 10, 5}).images[0], quick_sampler(), rng), Error);
}

TEST_CASE("mismatched tokenizer and model are rejected") {
  TokenizerConfig c = tiny_tokenizer();
  c.code_bits = 8;
  const Tokenizer<float> tok(c, 1);
  GenerativeModel<float> model(fixture::mini_model(), 2);
  Rng rng(1);
  try {
    interpolate_classes(tok, model, 0, 1, 0.5, quick_sampler(), rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CheckpointIncompatible);
  }
}

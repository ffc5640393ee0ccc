#include "doctest.h"

#include "bigr/binary_codec.hpp"
#include "bigr/errors.hpp"
#include "bigr/rng.hpp"
#include "oracles.hpp"

using namespace bigr;

TEST_CASE("code_to_index matches the positional sum") {
  CHECK(code_to_index(BinaryCode{{1, 0, 1, 1}}) == 13);
  CHECK(code_to_index(BinaryCode{{0, 0, 0, 0}}) == 0);
  CHECK(code_to_index(BinaryCode{{1, 1, 1, 1}}) == 15);
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(32));
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(k));
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.below(2));
    CHECK(code_to_index(bits) == oracle::index_of(bits));
  }
}

TEST_CASE("index and code round-trip exhaustively for small widths") {
  for (int k = 1; k <= 10; ++k) {
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << k); ++i) {
      const BinaryCode c = index_to_code(i, k);
      REQUIRE(c.width() == k);
      REQUIRE(code_to_index(c) == i);
    }
  }
}

TEST_CASE("width-32 codes round-trip at the extremes") {
  const BinaryCode ones = index_to_code(0xFFFFFFFFull, 32);
  CHECK(code_to_index(ones) == 0xFFFFFFFFu);
  CHECK(code_to_index(index_to_code(0x80000001ull, 32)) == 0x80000001u);
}

TEST_CASE("codec rejects bad widths and values") {
  CHECK_THROWS_AS(index_to_code(0, 33), Error);
  try {
    index_to_code(0, 33);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedWidth);
  }
  CHECK_THROWS_AS(index_to_code(16, 4), Error);
  CHECK_THROWS_AS(code_to_index(BinaryCode{{0, 2}}), Error);
}

TEST_CASE("sign quantization maps positive to one and zero to zero") {
  LatentGrid g{1, 2, 3, {0.5, -0.5, 0.0, 1e-9, -1e-9, 3.0}};
  const BinaryCodeGrid q = quantize_sign(g);
  CHECK(q.valid());
  CHECK(q.code_copy(0).bits == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(q.code_copy(1).bits == std::vector<std::uint8_t>{1, 0, 1});
  g.values[0] = std::nan("");
  CHECK_THROWS_AS(quantize_sign(g), Error);
}

TEST_CASE("grid validity tracks values and buffer length") {
  BinaryCodeGrid g(2, 2, 4);
  CHECK(g.valid());
  CHECK(g.size() == 4);
  g.bits()[3] = 2;
  CHECK_FALSE(g.valid());
  CHECK_THROWS_AS(BinaryCodeGrid(2, 2, 4, std::vector<std::uint8_t>(15)), Error);
  BinaryCodeGrid h(1, 2, 2);
  h.set_code(1, std::vector<std::uint8_t>{1, 1});
  CHECK(h.code_copy(1).bits == std::vector<std::uint8_t>{1, 1});
  CHECK_THROWS_AS(h.set_code(0, std::vector<std::uint8_t>{1}), Error);
}

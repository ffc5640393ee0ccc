#include "doctest.h"

#include "bigr/model.hpp"
#include "bigr/store_io.hpp"
#include "bigr/tokenizer.hpp"
#include "bigr/toy_data.hpp"

using namespace bigr;

namespace {

TokenizerConfig tiny_config() {
  TokenizerConfig c;
  c.image_size = 16;
  c.downsample = 4;
  c.code_bits = 8;
  c.widths = {8, 16};
  return c;
}

std::string snapshot(const nn::ParameterSet<float>& params) {
  Checkpoint ck;
  ck.component = Component::Tokenizer;
  ck.arrays = export_parameters(params);
  return serialize_checkpoint(ck);
}

}  // namespace

TEST_CASE("tokenizer config validation") {
  TokenizerConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.code_bits = 33;
  try {
    c.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnsupportedWidth);
  }
  c = tiny_config();
  c.image_size = 18;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.widths = {8};
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("encode yields valid grids and decode stays in range") {
  const Tokenizer<float> tok(tiny_config(), 1);
  const Dataset d = make_toy_dataset({6, 16, 10, 3});
  const auto codes = tok.encode(d.images);
  REQUIRE(codes.size() == 6);
  for (const auto& g : codes) {
    CHECK(g.valid());
    CHECK(g.height() == 4);
    CHECK(g.width() == 4);
    CHECK(g.bits_per_code() == 8);
  }
  CHECK(tok.encode(d.images[2]) == codes[2]);
  const Image zero = tok.decode(BinaryCodeGrid(4, 4, 8));
  CHECK(zero.valid());
  CHECK(zero.height == 16);
  CHECK(tok.decode(codes[0]) == tok.decode(codes[0]));
  Image wrong(3, 8, 8);
  CHECK_THROWS_AS(tok.encode(wrong), Error);
}

TEST_CASE("tokenizer training reduces held-out loss and is deterministic") {
  const Dataset train = make_toy_dataset({96, 16, 10, 1});
  const Dataset val = make_toy_dataset({32, 16, 10, 2});
  TokenizerTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = 5;
  Tokenizer<float> a(tiny_config(), 5), b(tiny_config(), 5);
  const auto ra = train_tokenizer(a, train, val, cfg);
  train_tokenizer(b, train, val, cfg);
  REQUIRE(ra.epochs.size() == 3);
  CHECK(ra.epochs.back().val_loss < ra.initial_val_loss);
  CHECK(snapshot(a.params()) == snapshot(b.params()));
  const auto stats = evaluate_reconstruction(a, val);
  CHECK(stats.psnr == doctest::Approx(ra.epochs.back().val_psnr));
  // Decoded images are clamped to [0, 1], which can only shrink the error.
  CHECK(stats.mse <= ra.epochs.back().val_loss + 1e-6);
}

TEST_CASE("zero learning rate leaves tokenizer parameters bit-identical") {
  const Dataset train = make_toy_dataset({32, 16, 10, 1});
  Tokenizer<float> tok(tiny_config(), 9);
  const std::string before = snapshot(tok.params());
  TokenizerTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.0;
  train_tokenizer(tok, train, train, cfg);
  CHECK(snapshot(tok.params()) == before);
}

TEST_CASE("tokenizer divergence raises a training failure and keeps finite parameters") {
  const Dataset train = make_toy_dataset({32, 16, 10, 1});
  Tokenizer<float> tok(tiny_config(), 9);
  TokenizerTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e30;
  try {
    train_tokenizer(tok, train, train, cfg);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TrainingFailure);
  }
  for (const auto& p : tok.params()) CHECK(p->value.allFinite());
}

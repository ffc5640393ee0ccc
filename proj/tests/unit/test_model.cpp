#include "doctest.h"

#include "bigr/model.hpp"
#include "bigr/store_io.hpp"
#include "bigr/trainer.hpp"
#include "fixtures.hpp"

using namespace bigr;
using namespace bigr::nn;

TEST_CASE("train mask ratio follows the cosine schedule") {
  Rng rng(1);
  CHECK(sample_train_mask(16, 0.0, rng).count() == 16);
  CHECK(sample_train_mask(16, 1.0, rng).count() == 1);
  CHECK(sample_train_mask(16, 2.0 / 3.0, rng).count() == 8);
  double total = 0.0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const MaskState m = sample_train_mask(256, rng);
    REQUIRE(m.count() >= 1);
    REQUIRE(m.count() <= 256);
    total += static_cast<double>(m.count()) / 256.0;
  }
  CHECK(std::abs(total / draws - 2.0 / 3.14159265358979323846) < 0.01);
}

TEST_CASE("config validation") {
  ModelConfig c = fixture::mini_model();
  CHECK_NOTHROW(c.validate());
  c.transcoder.code_bits = 7;
  CHECK_THROWS_AS(c.validate(), Error);
  c = fixture::mini_model();
  c.backbone.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = fixture::mini_model();
  c.backbone.feature_layer = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(fixture::mini_model().backbone.probe_layer() == 1);
  BackboneConfig b;
  CHECK(b.probe_layer() == 2);
  b.layers = 5;
  CHECK(b.probe_layer() == 3);
}

TEST_CASE("backbone gradients match finite differences") {
  for (bool shared : {true, false}) {
    ModelConfig c = fixture::mini_model();
    c.backbone.shared_adaln = shared;
    GenerativeModel<double> m(c, 3);
    oracle::randomize(m.params(), 11);
    Rng rng(4);
    const fixture::BackboneProbe probe(c, 2, rng);
    const auto r = oracle::check_gradients(m.params(), [&](Tape<double>& t) { return probe.loss(m, t); }, 40, 7);
    CHECK(r.checked == 40);
    CHECK(r.max_rel_error <= 1e-3);
  }
}

TEST_CASE("transcoder gradients match finite differences") {
  const ModelConfig c = fixture::mini_model();
  GenerativeModel<double> m(c, 5);
  oracle::randomize(m.params(), 12);
  Rng rng(6);
  const Matrix<double> z = codes_to_signed_rows<double>(fixture::random_grids(1, 1, 5, 6, rng));
  const Matrix<double> h = normal_matrix<double>(rng, 5, 16, 1.0);
  Matrix<double> y(5, 6);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = static_cast<double>(rng.below(2));
  const std::vector<int> steps = {1, 4, 9, 16, 2};
  const auto r = oracle::check_gradients(
      m.params(),
      [&](Tape<double>& t) { return wbce_with_logits(t, m.transcoder().logits(t, t.constant(z), steps, t.constant(h)), y); },
      40, 8);
  CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("timestep embedding layout") {
  const auto e = timestep_embedding<double>(std::vector<int>{0, 3}, 8);
  CHECK(e.rows() == 2);
  for (int j = 0; j < 4; ++j) {
    CHECK(e(0, j) == doctest::Approx(1.0));
    CHECK(e(0, 4 + j) == doctest::Approx(0.0));
  }
  CHECK(e(1, 0) == doctest::Approx(std::cos(3.0)));
  CHECK(e(1, 4) == doctest::Approx(std::sin(3.0)));
}

TEST_CASE("fresh transcoder predicts a fair coin") {
  const ModelConfig c = fixture::mini_model();
  GenerativeModel<float> m(c, 1);
  Tape<float> t(false);
  Rng rng(2);
  const Matrix<float> z = codes_to_signed_rows<float>(fixture::random_grids(1, 1, 3, 6, rng));
  const Matrix<float> h = normal_matrix<float>(rng, 3, 16, 1.0);
  Var l = m.transcoder().logits(t, t.constant(z), std::vector<int>{1, 2, 3}, t.constant(h));
  CHECK(t.value(l).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("guided logits reduce to either branch at s = 1 and s = 0") {
  Rng rng(3);
  const Matrix<float> a = normal_matrix<float>(rng, 4, 6, 3.0);
  const Matrix<float> b = normal_matrix<float>(rng, 4, 6, 3.0);
  CHECK(guided_logits(a, b, 1.0) == a.cast<double>());
  CHECK(guided_logits(a, b, 0.0) == b.cast<double>());
}

TEST_CASE("class embedding rejects ids beyond the unconditional token") {
  GenerativeModel<float> m(fixture::mini_model(), 1);
  Tape<float> t(false);
  CHECK(m.uncond_id() == 3);
  CHECK(m.backbone().class_table().rows() == 4);
  CHECK_NOTHROW(m.backbone().class_embedding(t, std::vector<int>{0, 3}));
  CHECK_THROWS_AS(m.backbone().class_embedding(t, std::vector<int>{4}), Error);
}

TEST_CASE("parameter export and import round-trip") {
  GenerativeModel<float> a(fixture::mini_model(), 1), b(fixture::mini_model(), 2);
  Checkpoint ck;
  ck.arrays = export_parameters(a.params());
  import_parameters(b.params(), ck);
  for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value == b.params()[i].value);
  ModelConfig wider = fixture::mini_model();
  wider.backbone.dim = 32;
  wider.transcoder.cond_dim = 32;
  GenerativeModel<float> w(wider, 1);
  try {
    import_parameters(w.params(), ck);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CheckpointIncompatible);
  }
}

TEST_CASE("denoise sampling yields bits consistent with probabilities") {
  GenerativeModel<float> m(fixture::mini_model(), 1);
  for (auto& p : m.params()) p->value.setZero();
  Rng rng(4);
  const Matrix<float> h = normal_matrix<float>(rng, 3, 16, 1.0);
  DenoiseOptions opt;
  opt.deterministic = true;
  const auto r = denoise_sample<float>(m.transcoder(), h, nullptr, respace_schedule(m.schedule(), 4), opt, rng);
  CHECK(r.rows == 3);
  CHECK(r.bits.size() == 18);
  for (std::size_t i = 0; i < r.bits.size(); ++i) {
    CHECK(r.bits[i] <= 1);
    CHECK(r.probs[i] >= 0.0);
    CHECK(r.probs[i] <= 1.0);
  }
}

TEST_CASE("direct target decodes in one step") {
  GenerativeModel<float> m(fixture::mini_model(TranscoderTarget::DirectBce), 1);
  Rng rng(5);
  const Matrix<float> h = normal_matrix<float>(rng, 2, 16, 1.0);
  DenoiseOptions opt;
  opt.deterministic = true;
  Rng r1(1), r2(2);
  const auto a = denoise_sample<float>(m.transcoder(), h, nullptr, m.schedule(), opt, r1);
  const auto b = denoise_sample<float>(m.transcoder(), h, nullptr, m.schedule(), opt, r2);
  CHECK(a.bits == b.bits);
  CHECK(a.probs == b.probs);
}

TEST_CASE("initial training loss equals the fair-coin reference") {
  const ModelConfig c = fixture::mini_model();
  GenerativeModel<float> m(c, 1);
  Rng rng(6);
  const auto grids = fixture::random_grids(256, 2, 2, 6, rng);
  std::vector<int> labels(grids.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  TrainConfig tc;
  tc.monitor_size = 256;
  const double initial = monitor_loss(m, grids, labels, tc);
  const double reference = residual_prior_loss(6, m.schedule(), 20000, 1);
  CHECK(initial == doctest::Approx(reference).epsilon(0.05));
}

TEST_CASE("training lowers the loss on a structured toy set and is deterministic") {
  for (auto target : {TranscoderTarget::Residual, TranscoderTarget::InitialCode, TranscoderTarget::DirectBce}) {
    CAPTURE(to_string(target));
    const ModelConfig c = fixture::mini_model(target);
    // Every class has one fixed code grid.
    Rng rng(7);
    const auto protos = fixture::random_grids(3, 2, 2, 6, rng);
    std::vector<BinaryCodeGrid> grids;
    std::vector<int> labels;
    for (int i = 0; i < 96; ++i) {
      grids.push_back(protos[static_cast<std::size_t>(i % 3)]);
      labels.push_back(i % 3);
    }
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 16;
    tc.learning_rate = 3e-3;
    tc.monitor_size = 96;
    GenerativeModel<float> a(c, 1), b(c, 1);
    const TrainReport ra = train_model(a, grids, labels, tc);
    const TrainReport rb = train_model(b, grids, labels, tc);
    CHECK(ra.epochs.back().monitor_loss < ra.initial_loss);
    CHECK(ra.step_losses == rb.step_losses);
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value == b.params()[i].value);
  }
}

TEST_CASE("unconditional training and zero learning rate") {
  const ModelConfig c = fixture::mini_model();
  Rng rng(8);
  const auto grids = fixture::random_grids(32, 2, 2, 6, rng);
  std::vector<int> labels(32, 1);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.learning_rate = 0.0;
  tc.unconditional = true;
  GenerativeModel<float> m(c, 1), ref(c, 1);
  train_model(m, grids, labels, tc);
  for (std::size_t i = 0; i < m.params().size(); ++i) CHECK(m.params()[i].value == ref.params()[i].value);
  labels[0] = 7;
  CHECK_THROWS_AS(train_model(m, grids, labels, tc), Error);
}

TEST_CASE("training_step counts masked tokens") {
  const ModelConfig c = fixture::mini_model();
  GenerativeModel<float> m(c, 1);
  Rng rng(9);
  const auto grids = fixture::random_grids(8, 2, 2, 6, rng);
  const std::vector<int> labels(8, 0);
  const StepStats s = training_step(m, grids, labels, 0.1, rng, false);
  CHECK(s.masked_tokens >= 8);
  CHECK(s.masked_tokens <= 32);
  CHECK(std::isfinite(s.loss));
}

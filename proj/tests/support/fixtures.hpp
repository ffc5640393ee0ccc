#pragma once

#include "bigr/model.hpp"
#include "bigr/nn/ops.hpp"
#include "oracles.hpp"

namespace fixture {

// 2 layers, dim 16, n = 4 tokens of 6 bits, 3 classes.
inline bigr::ModelConfig mini_model(bigr::TranscoderTarget target = bigr::TranscoderTarget::Residual, int T = 16) {
  bigr::ModelConfig c;
  c.backbone.layers = 2;
  c.backbone.heads = 2;
  c.backbone.dim = 16;
  c.backbone.seq_len = 4;
  c.backbone.num_classes = 3;
  c.backbone.code_bits = 6;
  c.backbone.mlp_ratio = 2;
  c.transcoder.code_bits = 6;
  c.transcoder.cond_dim = 16;
  c.transcoder.width = 12;
  c.transcoder.layers = 2;
  c.transcoder.time_dim = 8;
  c.transcoder.total_steps = T;
  c.transcoder.target = target;
  return c;
}

inline std::vector<bigr::BinaryCodeGrid> random_grids(int count, int h, int w, int k, bigr::Rng& rng) {
  std::vector<bigr::BinaryCodeGrid> out;
  for (int i = 0; i < count; ++i) {
    bigr::BinaryCodeGrid g(h, w, k);
    for (auto& b : g.bits()) b = static_cast<std::uint8_t>(rng.below(2));
    out.push_back(std::move(g));
  }
  return out;
}

// Scalar readout of every backbone output for a fixed batch, used by the
// gradient checks.
struct BackboneProbe {
  bigr::nn::Matrix<double> codes;
  std::vector<std::uint8_t> masked;
  std::vector<int> classes;
  bigr::nn::Matrix<double> readout;
  bigr::nn::Matrix<double> layer_readout;

  BackboneProbe(const bigr::ModelConfig& c, int batch, bigr::Rng& rng) {
    const int n = c.backbone.seq_len;
    const int side = 2;
    const auto grids = random_grids(batch, side, n / side, c.backbone.code_bits, rng);
    codes = bigr::codes_to_signed_rows<double>(grids);
    for (int i = 0; i < batch * n; ++i) masked.push_back(static_cast<std::uint8_t>(rng.below(2)));
    for (int i = 0; i < batch; ++i) classes.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c.backbone.num_classes + 1))));
    readout = bigr::nn::normal_matrix<double>(rng, batch * (n + 1), c.backbone.dim, 1.0);
    layer_readout = bigr::nn::normal_matrix<double>(rng, batch * (n + 1), c.backbone.dim, 1.0);
  }

  bigr::nn::Var loss(const bigr::GenerativeModel<double>& m, bigr::nn::Tape<double>& t) const {
    using namespace bigr::nn;
    Var cond = m.backbone().class_embedding(t, classes);
    Var emb = m.backbone().embed_sequence(t, t.constant(codes), masked, cond);
    const auto out = m.backbone().forward(t, emb, cond);
    return add(t, weighted_sum(t, out.final, readout), weighted_sum(t, out.layers.front(), layer_readout));
  }
};

}  // namespace fixture

#include "bigr/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bigr/errors.hpp"

namespace bigr {

void BackboneConfig::validate() const {
  require(layers >= 1 && heads >= 1 && dim >= 1 && seq_len >= 1 && num_classes >= 1 && mlp_ratio >= 1,
          ErrorKind::InvalidInput, "backbone sizes must be positive");
  require(dim % heads == 0, ErrorKind::InvalidInput,
          "embed dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
  if (code_bits > kMaxCodeWidth) fail(ErrorKind::UnsupportedWidth, "code width exceeds 32 bits");
  require(code_bits >= 1, ErrorKind::InvalidInput, "code width must be positive");
  require(cond_dropout >= 0.0 && cond_dropout <= 1.0, ErrorKind::InvalidInput, "cond_dropout must be in [0, 1]");
  require(feature_layer >= 0 && feature_layer <= layers, ErrorKind::InvalidInput,
          "feature layer must be in [1, " + std::to_string(layers) + "]");
}

int MaskState::count() const {
  return static_cast<int>(std::count_if(flags.begin(), flags.end(), [](std::uint8_t f) { return f != 0; }));
}

MaskState sample_train_mask(int n, Rng& rng) { return sample_train_mask(n, rng.uniform(), rng); }

MaskState sample_train_mask(int n, double u, Rng& rng) {
  require(n >= 1, ErrorKind::InvalidInput, "sequence length must be positive");
  const double ratio = std::cos(3.141592653589793 * u / 2.0);
  const int count = std::clamp(static_cast<int>(std::lround(ratio * n)), 1, n);
  // Partial Fisher-Yates: the first `count` entries are a uniform subset.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  MaskState mask;
  mask.flags.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < count; ++i) mask.flags[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  return mask;
}

template <class T>
Backbone<T>::Backbone(BackboneConfig config, nn::ParameterSet<T>& params, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.dim;
  const int hidden = d * config_.mlp_ratio;
  in_w_ = &params.add("bb.in.w", nn::xavier<T>(rng, config_.code_bits, d));
  in_b_ = &params.add("bb.in.b", nn::zeros<T>(1, d), false);
  class_emb_ = &params.add("bb.class_emb", nn::normal_matrix<T>(rng, config_.num_classes + 1, d, 0.02), false);
  mask_emb_ = &params.add("bb.mask_emb", nn::normal_matrix<T>(rng, 1, d, 0.02), false);
  pos_emb_ = &params.add("bb.pos_emb", nn::normal_matrix<T>(rng, config_.seq_len + 1, d, 0.02), false);

  // Modulation chunks: shift1, scale1, gate1, shift2, scale2, gate2. The
  // gates start at one so every block contributes from the first step.
  auto mod_bias = [d]() {
    nn::Matrix<T> b = nn::Matrix<T>::Zero(1, 6 * d);
    b.middleCols(2 * d, d).setOnes();
    b.middleCols(5 * d, d).setOnes();
    return b;
  };
  if (config_.shared_adaln) {
    mod_w_ = &params.add("bb.adaln.w", nn::zeros<T>(d, 6 * d));
    mod_b_ = &params.add("bb.adaln.b", mod_bias(), false);
  }
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "bb.block" + std::to_string(l) + ".";
    Block b;
    if (!config_.shared_adaln) {
      b.mod_w = &params.add(p + "adaln.w", nn::zeros<T>(d, 6 * d));
      b.mod_b = &params.add(p + "adaln.b", mod_bias(), false);
    }
    b.qkv_w = &params.add(p + "qkv.w", nn::xavier<T>(rng, d, 3 * d));
    b.qkv_b = &params.add(p + "qkv.b", nn::zeros<T>(1, 3 * d), false);
    b.proj_w = &params.add(p + "proj.w", nn::xavier<T>(rng, d, d));
    b.proj_b = &params.add(p + "proj.b", nn::zeros<T>(1, d), false);
    b.fc1_w = &params.add(p + "fc1.w", nn::xavier<T>(rng, d, hidden));
    b.fc1_b = &params.add(p + "fc1.b", nn::zeros<T>(1, hidden), false);
    b.fc2_w = &params.add(p + "fc2.w", nn::xavier<T>(rng, hidden, d));
    b.fc2_b = &params.add(p + "fc2.b", nn::zeros<T>(1, d), false);
    blocks_.push_back(b);
  }
}

template <class T>
nn::Var Backbone<T>::class_embedding(nn::Tape<T>& tape, std::span<const int> class_ids) const {
  std::vector<int> rows(class_ids.begin(), class_ids.end());
  for (int id : rows) {
    require(id >= 0 && id <= config_.num_classes, ErrorKind::InvalidInput,
            "class id " + std::to_string(id) + " is outside [0, " + std::to_string(config_.num_classes) + "]");
  }
  return nn::gather_rows(tape, tape.param(*class_emb_), std::move(rows));
}

template <class T>
nn::Var Backbone<T>::embed_sequence(nn::Tape<T>& tape, nn::Var codes_signed, std::span<const std::uint8_t> masked,
                                    nn::Var cond) const {
  const auto& cv = tape.value(codes_signed);
  const Eigen::Index batch = tape.value(cond).rows();
  require(cv.cols() == config_.code_bits && cv.rows() == batch * config_.seq_len &&
              static_cast<Eigen::Index>(masked.size()) == cv.rows() && tape.value(cond).cols() == config_.dim,
          ErrorKind::InvalidInput, "embed_sequence input shape mismatch");
  nn::Var x = nn::linear(tape, codes_signed, tape.param(*in_w_), tape.param(*in_b_));
  x = nn::replace_rows(tape, x, std::vector<std::uint8_t>(masked.begin(), masked.end()), tape.param(*mask_emb_));
  x = nn::prepend_rows(tape, cond, x, config_.seq_len);
  return nn::add_tiled(tape, x, tape.param(*pos_emb_));
}

template <class T>
BackboneOutput Backbone<T>::forward(nn::Tape<T>& tape, nn::Var embeddings, nn::Var cond) const {
  const int d = config_.dim;
  const int seq = config_.seq_len + 1;
  require(tape.value(embeddings).cols() == d && tape.value(embeddings).rows() == tape.value(cond).rows() * seq,
          ErrorKind::InvalidInput, "backbone input shape mismatch");
  nn::Var c = nn::silu(tape, cond);
  nn::Var shared_mod;
  if (config_.shared_adaln) shared_mod = nn::linear(tape, c, tape.param(*mod_w_), tape.param(*mod_b_));

  BackboneOutput out;
  nn::Var x = embeddings;
  for (const Block& b : blocks_) {
    nn::Var mod = config_.shared_adaln ? shared_mod : nn::linear(tape, c, tape.param(*b.mod_w), tape.param(*b.mod_b));
    auto chunk = [&](int i) { return nn::slice_cols(tape, mod, i * d, d); };
    nn::Var y = nn::modulate(tape, nn::layer_norm(tape, x), chunk(0), chunk(1), seq);
    nn::Var qkv = nn::linear(tape, y, tape.param(*b.qkv_w), tape.param(*b.qkv_b));
    y = nn::attention(tape, nn::slice_cols(tape, qkv, 0, d), nn::slice_cols(tape, qkv, d, d),
                      nn::slice_cols(tape, qkv, 2 * d, d), seq, config_.heads);
    y = nn::linear(tape, y, tape.param(*b.proj_w), tape.param(*b.proj_b));
    x = nn::gated_add(tape, x, y, chunk(2), seq);

    y = nn::modulate(tape, nn::layer_norm(tape, x), chunk(3), chunk(4), seq);
    y = nn::gelu(tape, nn::linear(tape, y, tape.param(*b.fc1_w), tape.param(*b.fc1_b)));
    y = nn::linear(tape, y, tape.param(*b.fc2_w), tape.param(*b.fc2_b));
    x = nn::gated_add(tape, x, y, chunk(5), seq);
    out.layers.push_back(x);
  }
  out.final = nn::layer_norm(tape, x);
  if (!tape.value(out.final).allFinite()) fail(ErrorKind::NumericFailure, "non-finite backbone activations");
  return out;
}

template <class T>
nn::Matrix<T> codes_to_signed_rows(std::span<const BinaryCodeGrid> grids) {
  require(!grids.empty(), ErrorKind::InvalidInput, "empty code batch");
  const int n = grids.front().size();
  const int k = grids.front().bits_per_code();
  nn::Matrix<T> rows(static_cast<Eigen::Index>(grids.size()) * n, k);
  for (std::size_t i = 0; i < grids.size(); ++i) {
    require(grids[i].size() == n && grids[i].bits_per_code() == k, ErrorKind::InvalidInput,
            "code grids in a batch must share a shape");
    for (int p = 0; p < n; ++p) {
      const auto c = grids[i].code(p);
      for (int b = 0; b < k; ++b) rows(static_cast<Eigen::Index>(i) * n + p, b) = c[b] ? T(1) : T(-1);
    }
  }
  return rows;
}

template class Backbone<float>;
template class Backbone<double>;
template nn::Matrix<float> codes_to_signed_rows<float>(std::span<const BinaryCodeGrid>);
template nn::Matrix<double> codes_to_signed_rows<double>(std::span<const BinaryCodeGrid>);

}  // namespace bigr

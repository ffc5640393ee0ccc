#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bigr/binary_codec.hpp"
#include "bigr/nn/ops.hpp"

namespace bigr {

struct BackboneConfig {
  int layers = 4;
  int heads = 4;
  int dim = 128;
  int seq_len = 16;  // n = h * w
  int num_classes = 10;
  int code_bits = 16;
  int mlp_ratio = 4;
  double cond_dropout = 0.1;
  int feature_layer = 0;  // 0 selects ceil(layers / 2)
  bool shared_adaln = true;

  int uncond_id() const { return num_classes; }
  int probe_layer() const { return feature_layer > 0 ? feature_layer : (layers + 1) / 2; }
  void validate() const;
};

// Per-position mask flags (1 = masked).
struct MaskState {
  std::vector<std::uint8_t> flags;

  int size() const { return static_cast<int>(flags.size()); }
  int count() const;
};

// Cosine mask-ratio draw: u ~ U(0,1), ratio = cos(pi u / 2), count =
// clamp(round(ratio n), 1, n), positions uniform without replacement.
MaskState sample_train_mask(int n, Rng& rng);
MaskState sample_train_mask(int n, double u, Rng& rng);

struct BackboneOutput {
  std::vector<nn::Var> layers;  // after block l (1-based l = index + 1), batch * (n + 1) rows
  nn::Var final;                // final layer norm, batch * (n + 1) rows
};

// Bidirectional pre-norm transformer over [cond, code_1 .. code_n].
template <class T>
class Backbone {
 public:
  Backbone(BackboneConfig config, nn::ParameterSet<T>& params, Rng& rng);

  const BackboneConfig& config() const { return config_; }

  // Rows of the class table for ids in [0, C]; C is the unconditional token.
  nn::Var class_embedding(nn::Tape<T>& tape, std::span<const int> class_ids) const;
  const nn::Matrix<T>& class_table() const { return class_emb_->value; }

  // codes_signed: batch * n rows x K of +-1 (masked rows are ignored);
  // masked: batch * n flags; cond: batch x dim. Returns batch * (n + 1) rows.
  nn::Var embed_sequence(nn::Tape<T>& tape, nn::Var codes_signed, std::span<const std::uint8_t> masked,
                         nn::Var cond) const;

  BackboneOutput forward(nn::Tape<T>& tape, nn::Var embeddings, nn::Var cond) const;

 private:
  struct Block {
    nn::Parameter<T>* mod_w = nullptr;  // per-layer modulation when adaLN is not shared
    nn::Parameter<T>* mod_b = nullptr;
    nn::Parameter<T>* qkv_w;
    nn::Parameter<T>* qkv_b;
    nn::Parameter<T>* proj_w;
    nn::Parameter<T>* proj_b;
    nn::Parameter<T>* fc1_w;
    nn::Parameter<T>* fc1_b;
    nn::Parameter<T>* fc2_w;
    nn::Parameter<T>* fc2_b;
  };

  BackboneConfig config_;
  nn::Parameter<T>* in_w_;
  nn::Parameter<T>* in_b_;
  nn::Parameter<T>* class_emb_;
  nn::Parameter<T>* mask_emb_;
  nn::Parameter<T>* pos_emb_;
  nn::Parameter<T>* mod_w_ = nullptr;
  nn::Parameter<T>* mod_b_ = nullptr;
  std::vector<Block> blocks_;
};

// +-1 rows for a batch of grids, batch * n rows x K.
template <class T>
nn::Matrix<T> codes_to_signed_rows(std::span<const BinaryCodeGrid> grids);

}  // namespace bigr

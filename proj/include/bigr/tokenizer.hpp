#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bigr/binary_codec.hpp"
#include "bigr/image.hpp"
#include "bigr/nn/ops.hpp"
#include "bigr/store_io.hpp"

namespace bigr {

struct TokenizerConfig {
  int channels = 3;
  int image_size = 32;
  int downsample = 8;  // power of two; one strided stage per factor of two
  int code_bits = 16;
  std::vector<int> widths = {32, 64, 128};

  int grid_size() const { return image_size / downsample; }
  int stages() const;
  void validate() const;
};

// Convolutional binary autoencoder. The encoder emits K latents per token;
// quantization is the sign function, and during training the decoder sees the
// +-1 codes with a straight-through gradient.
template <class T>
class Tokenizer {
 public:
  Tokenizer(TokenizerConfig config, std::uint64_t seed);

  const TokenizerConfig& config() const { return config_; }
  nn::ParameterSet<T>& params() const { return params_; }

  // images: batch*H*W rows x C. Returns batch*h*w rows x K latents.
  nn::Var encode_latents(nn::Tape<T>& tape, nn::Var images, int batch) const;
  // codes: batch*h*w rows x K, entries +-1. Returns batch*H*W rows x C.
  nn::Var decode_signed(nn::Tape<T>& tape, nn::Var codes, int batch) const;
  // Full training graph: encode -> sign (straight-through) -> decode.
  nn::Var reconstruct(nn::Tape<T>& tape, nn::Var images, int batch) const;

  nn::Matrix<T> latents(std::span<const Image> images) const;
  std::vector<BinaryCodeGrid> encode(std::span<const Image> images) const;
  BinaryCodeGrid encode(const Image& image) const;
  std::vector<Image> decode(std::span<const BinaryCodeGrid> codes) const;
  Image decode(const BinaryCodeGrid& codes) const;

 private:
  struct Conv {
    nn::Parameter<T>* weight;
    nn::Parameter<T>* bias;
  };

  void check_image(const Image& image) const;

  TokenizerConfig config_;
  mutable nn::ParameterSet<T> params_;
  std::vector<Conv> down_;
  Conv enc_mid_{}, enc_out_{};
  Conv dec_in_{}, dec_mid_{};
  std::vector<Conv> up_;
  Conv dec_out_{};
};

// Packs images (HWC) into batch*H*W x C rows.
template <class T>
nn::Matrix<T> images_to_rows(std::span<const Image> images);

struct TokenizerTrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct TokenizerEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_psnr = 0.0;
  double seconds = 0.0;
};

struct TokenizerTrainReport {
  double initial_val_loss = 0.0;
  std::vector<double> step_losses;
  std::vector<TokenizerEpochStats> epochs;
};

// Mean squared reconstruction error and mean PSNR over a dataset, no gradients.
struct ReconstructionStats {
  double mse = 0.0;
  double psnr = 0.0;
};

template <class T>
ReconstructionStats evaluate_reconstruction(const Tokenizer<T>& tokenizer, const Dataset& data, int batch_size = 64);

// Trains by MSE reconstruction. A non-finite loss restores the parameters of
// the last completed epoch and raises a training-failure error.
template <class T>
TokenizerTrainReport train_tokenizer(Tokenizer<T>& tokenizer, const Dataset& train, const Dataset& val,
                                     const TokenizerTrainConfig& config,
                                     const std::function<void(const TokenizerEpochStats&)>& on_epoch = {});

}  // namespace bigr

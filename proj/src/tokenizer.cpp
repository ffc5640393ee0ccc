#include "bigr/tokenizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "bigr/errors.hpp"
#include "bigr/nn/optim.hpp"

namespace bigr {

int TokenizerConfig::stages() const {
  int s = 0;
  for (int d = downsample; d > 1; d >>= 1) ++s;
  return s;
}

void TokenizerConfig::validate() const {
  require(channels == 1 || channels == 3, ErrorKind::InvalidInput, "tokenizer supports 1 or 3 channels");
  require(downsample >= 2 && (downsample & (downsample - 1)) == 0, ErrorKind::InvalidInput,
          "downsample factor must be a power of two >= 2");
  require(image_size > 0 && image_size % downsample == 0, ErrorKind::InvalidInput,
          "image size " + std::to_string(image_size) + " is not divisible by downsample factor " +
              std::to_string(downsample));
  if (code_bits > kMaxCodeWidth) {
    fail(ErrorKind::UnsupportedWidth, "code width " + std::to_string(code_bits) + " exceeds 32 bits");
  }
  require(code_bits >= 1, ErrorKind::InvalidInput, "code width must be positive");
  require(static_cast<int>(widths.size()) == stages(), ErrorKind::InvalidInput,
          "tokenizer needs one channel width per downsampling stage (" + std::to_string(stages()) + ")");
  for (int w : widths) require(w >= 1 && w <= 1024, ErrorKind::InvalidInput, "tokenizer widths must be in [1, 1024]");
}

template <class T>
nn::Matrix<T> images_to_rows(std::span<const Image> images) {
  require(!images.empty(), ErrorKind::InvalidInput, "empty image batch");
  const Image& first = images.front();
  const Eigen::Index per = static_cast<Eigen::Index>(first.height) * first.width;
  nn::Matrix<T> rows(per * static_cast<Eigen::Index>(images.size()), first.channels);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = images[i];
    require(im.channels == first.channels && im.height == first.height && im.width == first.width,
            ErrorKind::InvalidInput, "images in a batch must share a shape");
    for (Eigen::Index p = 0; p < per; ++p) {
      for (int c = 0; c < im.channels; ++c) {
        rows(static_cast<Eigen::Index>(i) * per + p, c) = static_cast<T>(im.pixels[p * im.channels + c]);
      }
    }
  }
  return rows;
}

template <class T>
Tokenizer<T>::Tokenizer(TokenizerConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(seed, 0x544F4Bull));
  auto conv = [&](const std::string& name, int kernel, int in, int out) {
    const double std = std::sqrt(2.0 / (kernel * kernel * in));
    Conv c;
    c.weight = &params_.add(name + ".w", nn::normal_matrix<T>(rng, kernel * kernel * in, out, std));
    c.bias = &params_.add(name + ".b", nn::zeros<T>(1, out), false);
    return c;
  };
  auto conv_t = [&](const std::string& name, int kernel, int in, int out) {
    // Each output pixel of a stride-2, k=4 transposed conv gathers 4 taps per input channel.
    const double std = std::sqrt(2.0 / (4.0 * in));
    Conv c;
    c.weight = &params_.add(name + ".w", nn::normal_matrix<T>(rng, in, kernel * kernel * out, std));
    c.bias = &params_.add(name + ".b", nn::zeros<T>(1, out), false);
    return c;
  };
  const auto& w = config_.widths;
  const int stages = config_.stages();
  int in = config_.channels;
  for (int s = 0; s < stages; ++s) {
    down_.push_back(conv("enc.down" + std::to_string(s), 4, in, w[s]));
    in = w[s];
  }
  enc_mid_ = conv("enc.mid", 3, in, in);
  enc_out_ = conv("enc.out", 1, in, config_.code_bits);
  dec_in_ = conv("dec.in", 3, config_.code_bits, in);
  dec_mid_ = conv("dec.mid", 3, in, in);
  for (int s = stages - 1; s >= 0; --s) {
    const int out = s > 0 ? w[s - 1] : w[0];
    up_.push_back(conv_t("dec.up" + std::to_string(s), 4, w[s], out));
  }
  dec_out_ = conv("dec.out", 3, w[0], config_.channels);
}

template <class T>
nn::Var Tokenizer<T>::encode_latents(nn::Tape<T>& tape, nn::Var images, int batch) const {
  int size = config_.image_size;
  int channels = config_.channels;
  nn::Var x = images;
  for (std::size_t s = 0; s < down_.size(); ++s) {
    const nn::ConvShape shape{batch, size, size, channels, 4, 2, 1};
    x = nn::silu(tape, nn::conv2d(tape, x, tape.param(*down_[s].weight), tape.param(*down_[s].bias), shape));
    size /= 2;
    channels = config_.widths[s];
  }
  x = nn::silu(tape, nn::conv2d(tape, x, tape.param(*enc_mid_.weight), tape.param(*enc_mid_.bias),
                                nn::ConvShape{batch, size, size, channels, 3, 1, 1}));
  return nn::conv2d(tape, x, tape.param(*enc_out_.weight), tape.param(*enc_out_.bias),
                    nn::ConvShape{batch, size, size, channels, 1, 1, 0});
}

template <class T>
nn::Var Tokenizer<T>::decode_signed(nn::Tape<T>& tape, nn::Var codes, int batch) const {
  int size = config_.grid_size();
  int channels = config_.widths.back();
  nn::Var x = nn::silu(tape, nn::conv2d(tape, codes, tape.param(*dec_in_.weight), tape.param(*dec_in_.bias),
                                        nn::ConvShape{batch, size, size, config_.code_bits, 3, 1, 1}));
  x = nn::silu(tape, nn::conv2d(tape, x, tape.param(*dec_mid_.weight), tape.param(*dec_mid_.bias),
                                nn::ConvShape{batch, size, size, channels, 3, 1, 1}));
  const int stages = config_.stages();
  for (int i = 0; i < stages; ++i) {
    const int s = stages - 1 - i;
    const int out = s > 0 ? config_.widths[s - 1] : config_.widths[0];
    const nn::ConvShape shape{batch, size * 2, size * 2, out, 4, 2, 1};
    x = nn::silu(tape, nn::conv_transpose2d(tape, x, tape.param(*up_[i].weight), tape.param(*up_[i].bias), shape));
    size *= 2;
    channels = out;
  }
  return nn::conv2d(tape, x, tape.param(*dec_out_.weight), tape.param(*dec_out_.bias),
                    nn::ConvShape{batch, size, size, channels, 3, 1, 1});
}

template <class T>
nn::Var Tokenizer<T>::reconstruct(nn::Tape<T>& tape, nn::Var images, int batch) const {
  // tanh keeps the straight-through gradient bounded; sign(tanh(x)) == sign(x).
  nn::Var latents = nn::tanh(tape, encode_latents(tape, images, batch));
  return decode_signed(tape, nn::sign_straight_through(tape, latents), batch);
}

template <class T>
void Tokenizer<T>::check_image(const Image& image) const {
  require(image.channels == config_.channels && image.height == config_.image_size &&
              image.width == config_.image_size,
          ErrorKind::InvalidInput,
          "image is " + std::to_string(image.channels) + "x" + std::to_string(image.height) + "x" +
              std::to_string(image.width) + " but the tokenizer expects " + std::to_string(config_.channels) + "x" +
              std::to_string(config_.image_size) + "x" + std::to_string(config_.image_size));
}

template <class T>
nn::Matrix<T> Tokenizer<T>::latents(std::span<const Image> images) const {
  for (const auto& im : images) check_image(im);
  nn::Tape<T> tape(false);
  nn::Var x = tape.constant(images_to_rows<T>(images));
  return tape.value(encode_latents(tape, x, static_cast<int>(images.size())));
}

template <class T>
std::vector<BinaryCodeGrid> Tokenizer<T>::encode(std::span<const Image> images) const {
  const nn::Matrix<T> lat = latents(images);
  const int g = config_.grid_size();
  const int k = config_.code_bits;
  std::vector<BinaryCodeGrid> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    LatentGrid grid{g, g, k, {}};
    grid.values.resize(static_cast<std::size_t>(g) * g * k);
    for (int p = 0; p < g * g; ++p) {
      for (int b = 0; b < k; ++b) {
        grid.values[static_cast<std::size_t>(p) * k + b] =
            static_cast<double>(lat(static_cast<Eigen::Index>(i) * g * g + p, b));
      }
    }
    out.push_back(quantize_sign(grid));
  }
  return out;
}

template <class T>
BinaryCodeGrid Tokenizer<T>::encode(const Image& image) const {
  return encode(std::span<const Image>(&image, 1)).front();
}

template <class T>
std::vector<Image> Tokenizer<T>::decode(std::span<const BinaryCodeGrid> codes) const {
  require(!codes.empty(), ErrorKind::InvalidInput, "nothing to decode");
  const int g = config_.grid_size();
  const int k = config_.code_bits;
  nn::Matrix<T> rows(static_cast<Eigen::Index>(codes.size()) * g * g, k);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto& grid = codes[i];
    if (grid.bits_per_code() != k) {
      fail(ErrorKind::CheckpointIncompatible, "code grid has " + std::to_string(grid.bits_per_code()) +
                                                  "-bit codes but the tokenizer was trained with " +
                                                  std::to_string(k) + " bits");
    }
    require(grid.height() == g && grid.width() == g && grid.valid(), ErrorKind::InvalidInput,
            "code grid shape does not match the tokenizer");
    for (int p = 0; p < g * g; ++p) {
      auto c = grid.code(p);
      for (int b = 0; b < k; ++b) rows(static_cast<Eigen::Index>(i) * g * g + p, b) = c[b] ? T(1) : T(-1);
    }
  }
  nn::Tape<T> tape(false);
  const nn::Matrix<T>& out = tape.value(decode_signed(tape, tape.constant(std::move(rows)), static_cast<int>(codes.size())));
  const int size = config_.image_size;
  const int ch = config_.channels;
  std::vector<Image> images;
  images.reserve(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    Image im(ch, size, size);
    for (int p = 0; p < size * size; ++p) {
      for (int c = 0; c < ch; ++c) {
        im.pixels[static_cast<std::size_t>(p) * ch + c] =
            static_cast<float>(out(static_cast<Eigen::Index>(i) * size * size + p, c));
      }
    }
    clamp_unit(im);
    images.push_back(std::move(im));
  }
  return images;
}

template <class T>
Image Tokenizer<T>::decode(const BinaryCodeGrid& codes) const {
  return decode(std::span<const BinaryCodeGrid>(&codes, 1)).front();
}

template <class T>
ReconstructionStats evaluate_reconstruction(const Tokenizer<T>& tokenizer, const Dataset& data, int batch_size) {
  require(data.size() > 0, ErrorKind::InvalidInput, "empty evaluation set");
  ReconstructionStats stats;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    std::span<const Image> batch(data.images.data() + start, end - start);
    const auto recon = tokenizer.decode(tokenizer.encode(batch));
    for (std::size_t i = 0; i < recon.size(); ++i) {
      stats.mse += mse(recon[i], batch[i]);
      stats.psnr += psnr(recon[i], batch[i]);
    }
  }
  stats.mse /= static_cast<double>(data.size());
  stats.psnr /= static_cast<double>(data.size());
  return stats;
}

namespace {

template <class T>
std::vector<nn::Matrix<T>> snapshot(const nn::ParameterSet<T>& params) {
  std::vector<nn::Matrix<T>> out;
  for (const auto& p : params) out.push_back(p->value);
  return out;
}

template <class T>
void restore(nn::ParameterSet<T>& params, const std::vector<nn::Matrix<T>>& values) {
  std::size_t i = 0;
  for (auto& p : params) p->value = values[i++];
}

// MSE of the training graph (straight-through path) over a dataset.
template <class T>
double reconstruction_loss(const Tokenizer<T>& tokenizer, const Dataset& data, int batch_size) {
  double acc = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    std::span<const Image> batch(data.images.data() + start, end - start);
    nn::Tape<T> tape(false);
    const nn::Matrix<T> target = images_to_rows<T>(batch);
    nn::Var recon = tokenizer.reconstruct(tape, tape.constant(target), static_cast<int>(batch.size()));
    acc += static_cast<double>((tape.value(recon) - target).squaredNorm());
  }
  return acc / (static_cast<double>(data.size()) * data.channels * data.height * data.width);
}

}  // namespace

template <class T>
TokenizerTrainReport train_tokenizer(Tokenizer<T>& tokenizer, const Dataset& train, const Dataset& val,
                                     const TokenizerTrainConfig& config,
                                     const std::function<void(const TokenizerEpochStats&)>& on_epoch) {
  require(train.size() > 0, ErrorKind::InvalidInput, "tokenizer training set is empty");
  require(val.size() > 0, ErrorKind::InvalidInput, "tokenizer validation set is empty");
  require(config.epochs >= 0 && config.batch_size >= 1, ErrorKind::InvalidInput, "invalid tokenizer training config");
  const auto& tc = tokenizer.config();
  require(train.channels == tc.channels && train.height == tc.image_size && train.width == tc.image_size,
          ErrorKind::InvalidInput, "training images do not match the tokenizer shape");

  nn::AdamWConfig opt_config;
  opt_config.learning_rate = config.learning_rate;
  opt_config.weight_decay = config.weight_decay;
  opt_config.beta2 = 0.99;
  nn::AdamW<T> optimizer(tokenizer.params(), opt_config);

  TokenizerTrainReport report;
  report.initial_val_loss = reconstruction_loss(tokenizer, val, 64);
  auto last_good = snapshot(tokenizer.params());

  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const long total_steps = static_cast<long>(steps_per_epoch) * config.epochs;
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto order = shuffled_order(train.size(), derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<Image> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train.images[order[i]]);
      tokenizer.params().zero_grad();
      nn::Tape<T> tape;
      const nn::Matrix<T> target = images_to_rows<T>(batch);
      nn::Var recon = tokenizer.reconstruct(tape, tape.constant(target), static_cast<int>(batch.size()));
      nn::Var loss = nn::mse_loss(tape, recon, target);
      const double value = static_cast<double>(tape.value(loss)(0, 0));
      if (!std::isfinite(value)) {
        restore(tokenizer.params(), last_good);
        fail(ErrorKind::TrainingFailure, "tokenizer loss became non-finite at epoch " + std::to_string(epoch) +
                                             "; parameters restored to the last completed epoch");
      }
      tape.backward(loss);
      optimizer.set_learning_rate(nn::warmup_cosine_lr(config.learning_rate, step++, total_steps));
      optimizer.step();
      report.step_losses.push_back(value);
      epoch_loss += value;
      ++batches;
    }
    TokenizerEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
    stats.val_loss = reconstruction_loss(tokenizer, val, 64);
    stats.val_psnr = evaluate_reconstruction(tokenizer, val).psnr;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(stats.val_loss)) {
      restore(tokenizer.params(), last_good);
      fail(ErrorKind::TrainingFailure, "tokenizer validation loss became non-finite at epoch " + std::to_string(epoch));
    }
    last_good = snapshot(tokenizer.params());
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return report;
}

template class Tokenizer<float>;
template class Tokenizer<double>;
template nn::Matrix<float> images_to_rows<float>(std::span<const Image>);
template nn::Matrix<double> images_to_rows<double>(std::span<const Image>);
template ReconstructionStats evaluate_reconstruction(const Tokenizer<float>&, const Dataset&, int);
template ReconstructionStats evaluate_reconstruction(const Tokenizer<double>&, const Dataset&, int);
template TokenizerTrainReport train_tokenizer(Tokenizer<float>&, const Dataset&, const Dataset&,
                                              const TokenizerTrainConfig&,
                                              const std::function<void(const TokenizerEpochStats&)>&);
template TokenizerTrainReport train_tokenizer(Tokenizer<double>&, const Dataset&, const Dataset&,
                                              const TokenizerTrainConfig&,
                                              const std::function<void(const TokenizerEpochStats&)>&);

}  // namespace bigr

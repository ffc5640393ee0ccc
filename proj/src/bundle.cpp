#include "bigr/bundle.hpp"

#include <algorithm>

#include "bigr/errors.hpp"

namespace bigr {

std::filesystem::path tokenizer_path(const std::filesystem::path& dir) { return dir / "tokenizer.bgrc"; }
std::filesystem::path model_path(const std::filesystem::path& dir) { return dir / "model.bgrc"; }

Checkpoint make_checkpoint(const Tokenizer<float>& tokenizer, const Config& config) {
  Checkpoint c;
  c.component = Component::Tokenizer;
  c.config_text = config.serialize();
  c.seed = static_cast<std::uint64_t>(config.integer("seed"));
  c.arrays = export_parameters(tokenizer.params());
  return c;
}

Checkpoint make_checkpoint(const GenerativeModel<float>& model, const Config& config) {
  Checkpoint c;
  c.component = Component::Model;
  c.config_text = config.serialize();
  c.seed = static_cast<std::uint64_t>(config.integer("seed"));
  c.arrays = export_parameters(model.params());
  return c;
}

std::unique_ptr<Tokenizer<float>> tokenizer_from_checkpoint(const Checkpoint& checkpoint, Config* config) {
  require(checkpoint.component == Component::Tokenizer, ErrorKind::CheckpointIncompatible,
          "expected a tokenizer checkpoint");
  Config c = Config::parse(checkpoint.config_text);
  auto tok = std::make_unique<Tokenizer<float>>(tokenizer_config(c), checkpoint.seed);
  import_parameters(tok->params(), checkpoint);
  if (config) *config = std::move(c);
  return tok;
}

std::unique_ptr<GenerativeModel<float>> model_from_checkpoint(const Checkpoint& checkpoint, Config* config) {
  require(checkpoint.component == Component::Model, ErrorKind::CheckpointIncompatible, "expected a model checkpoint");
  Config c = Config::parse(checkpoint.config_text);
  auto model = std::make_unique<GenerativeModel<float>>(model_config(c), checkpoint.seed);
  import_parameters(model->params(), checkpoint);
  if (config) *config = std::move(c);
  return model;
}

std::vector<BinaryCodeGrid> encode_all(const Tokenizer<float>& tokenizer, std::span<const Image> images, int chunk) {
  std::vector<BinaryCodeGrid> out;
  out.reserve(images.size());
  for (std::size_t s = 0; s < images.size(); s += static_cast<std::size_t>(chunk)) {
    auto part = tokenizer.encode(images.subspan(s, std::min(images.size() - s, static_cast<std::size_t>(chunk))));
    for (auto& g : part) out.push_back(std::move(g));
  }
  return out;
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  for (const auto& p : {tokenizer_path(dir), model_path(dir)}) {
    if (!std::filesystem::exists(p)) fail(ErrorKind::Load, "missing checkpoint " + p.string());
  }
  ModelBundle b;
  b.tokenizer = tokenizer_from_checkpoint(load_checkpoint(tokenizer_path(dir), Component::Tokenizer));
  b.model = model_from_checkpoint(load_checkpoint(model_path(dir), Component::Model), &b.config);
  const auto& tc = b.tokenizer->config();
  if (tc.code_bits != b.model->code_bits() || tc.grid_size() * tc.grid_size() != b.model->seq_len()) {
    fail(ErrorKind::CheckpointIncompatible, "tokenizer and model checkpoints in " + dir.string() + " do not match");
  }
  return b;
}

}  // namespace bigr

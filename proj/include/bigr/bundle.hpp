#pragma once

#include <filesystem>
#include <memory>

#include "bigr/config.hpp"

namespace bigr {

// Trained tokenizer and model plus the settings they were built from.
struct ModelBundle {
  Config config;
  std::unique_ptr<Tokenizer<float>> tokenizer;
  std::unique_ptr<GenerativeModel<float>> model;
};

std::filesystem::path tokenizer_path(const std::filesystem::path& dir);
std::filesystem::path model_path(const std::filesystem::path& dir);

Checkpoint make_checkpoint(const Tokenizer<float>& tokenizer, const Config& config);
Checkpoint make_checkpoint(const GenerativeModel<float>& model, const Config& config);

// Rebuilds from the stored settings and copies every array; a mismatch
// between arrays and settings raises a checkpoint-incompatibility error.
std::unique_ptr<Tokenizer<float>> tokenizer_from_checkpoint(const Checkpoint& checkpoint, Config* config = nullptr);
std::unique_ptr<GenerativeModel<float>> model_from_checkpoint(const Checkpoint& checkpoint, Config* config = nullptr);

// Encodes images in chunks to bound peak memory.
std::vector<BinaryCodeGrid> encode_all(const Tokenizer<float>& tokenizer, std::span<const Image> images,
                                       int chunk = 256);

// Loads <dir>/tokenizer.bgrc and <dir>/model.bgrc; sampler settings come
// from the model checkpoint.
ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace bigr

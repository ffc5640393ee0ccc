#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bigr/model.hpp"
#include "bigr/probe.hpp"
#include "bigr/sampler.hpp"
#include "bigr/tokenizer.hpp"
#include "bigr/trainer.hpp"

namespace bigr {

// Flat key = value settings with typed validation. Every key has a built-in
// default; merge order is defaults, then file text, then flags.
class Config {
 public:
  enum class Type { Int, Real, Bool, Text, IntList };

  struct Key {
    std::string name;
    Type type;
    std::string default_value;
    std::string help;
  };

  Config();

  static const std::vector<Key>& keys();
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  // `source` prefixes error messages (a path, "flag", ...).
  void merge_text(std::string_view text, std::string_view source = "config");
  void set(std::string_view key, std::string_view value);
  bool has(std::string_view key) const;

  const std::string& text(std::string_view key) const;
  int integer(std::string_view key) const;
  double real(std::string_view key) const;
  bool boolean(std::string_view key) const;
  std::vector<int> int_list(std::string_view key) const;

  // Every key in declaration order, one "key = value" line each.
  std::string serialize() const;
  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

// Closest known key by edit distance, or "" when nothing is close.
std::string suggest_key(std::string_view unknown);
std::size_t edit_distance(std::string_view a, std::string_view b);

TokenizerConfig tokenizer_config(const Config& config);
TokenizerTrainConfig tokenizer_train_config(const Config& config);
ModelConfig model_config(const Config& config);
TrainConfig train_config(const Config& config);
SamplerConfig sampler_config(const Config& config);
ProbeConfig probe_config(const Config& config);

}  // namespace bigr

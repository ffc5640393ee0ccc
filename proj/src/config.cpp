#include "bigr/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "bigr/errors.hpp"
#include "bigr/store_io.hpp"

namespace bigr {

namespace {

using Type = Config::Type;

const Config::Key* find_key(std::string_view name) {
  for (const auto& k : Config::keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_int(std::string_view s, long long& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

bool parse_real(std::string_view s, double& out) {
  if (s.empty()) return false;
  std::string copy(s);
  std::size_t used = 0;
  try {
    out = std::stod(copy, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == copy.size() && std::isfinite(out);
}

bool parse_bool(std::string_view s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    out = false;
    return true;
  }
  return false;
}

std::vector<int> split_ints(std::string_view s, bool& ok) {
  std::vector<int> out;
  ok = true;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string part = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
    long long v = 0;
    if (!parse_int(part, v) || v < INT32_MIN || v > INT32_MAX) {
      ok = false;
      return {};
    }
    out.push_back(static_cast<int>(v));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

const char* type_name(Type t) {
  switch (t) {
    case Type::Int: return "an integer";
    case Type::Real: return "a number";
    case Type::Bool: return "true or false";
    case Type::Text: return "text";
    case Type::IntList: return "a comma-separated list of integers";
  }
  return "a value";
}

void check_value(const Config::Key& key, std::string_view value, std::string_view source) {
  bool ok = true;
  long long i = 0;
  double r = 0.0;
  bool b = false;
  switch (key.type) {
    case Type::Int: ok = parse_int(value, i) && i >= INT32_MIN && i <= INT32_MAX; break;
    case Type::Real: ok = parse_real(value, r); break;
    case Type::Bool: ok = parse_bool(value, b); break;
    case Type::Text: ok = !value.empty(); break;
    case Type::IntList: split_ints(value, ok); break;
  }
  if (!ok) {
    fail(ErrorKind::Parse, std::string(source) + ": " + key.name + " expects " + type_name(key.type) + ", got \"" +
                               std::string(value) + "\"");
  }
}

}  // namespace

const std::vector<Config::Key>& Config::keys() {
  static const std::vector<Key> k = {
      // data
      {"image_size", Type::Int, "32", "image side in pixels"},
      {"channels", Type::Int, "3", "image channels (1 or 3)"},
      {"num_classes", Type::Int, "10", "number of classes C"},
      {"train_count", Type::Int, "6000", "toy training images"},
      {"val_count", Type::Int, "1000", "toy held-out images"},
      {"data_seed", Type::Int, "1", "toy dataset seed"},
      // tokenizer
      {"tok_downsample", Type::Int, "8", "tokenizer downsample factor d"},
      {"code_bits", Type::Int, "16", "bits per token K"},
      {"tok_widths", Type::IntList, "32,64,128", "tokenizer channel widths per stage"},
      {"tok_epochs", Type::Int, "8", "tokenizer training epochs"},
      {"tok_batch_size", Type::Int, "32", "tokenizer batch size"},
      {"tok_lr", Type::Real, "0.001", "tokenizer peak learning rate"},
      // backbone
      {"layers", Type::Int, "4", "transformer layers"},
      {"heads", Type::Int, "4", "attention heads"},
      {"dim", Type::Int, "128", "embedding width"},
      {"mlp_ratio", Type::Int, "4", "transformer MLP expansion"},
      {"cond_dropout", Type::Real, "0.1", "probability of replacing the class with the unconditional token"},
      {"feature_layer", Type::Int, "0", "representation layer (0 = middle)"},
      {"shared_adaln", Type::Bool, "true", "one modulation network shared by all layers"},
      // transcoder
      {"tc_width", Type::Int, "256", "transcoder MLP width"},
      {"tc_layers", Type::Int, "3", "transcoder residual blocks"},
      {"tc_time_dim", Type::Int, "64", "timestep embedding width"},
      {"timesteps", Type::Int, "64", "training diffusion steps T"},
      {"target", Type::Text, "residual", "transcoder target: residual, z0 or direct"},
      // training
      {"epochs", Type::Int, "10", "model training epochs"},
      {"batch_size", Type::Int, "32", "model batch size"},
      {"lr", Type::Real, "0.001", "model peak learning rate"},
      {"weight_decay", Type::Real, "0.02", "decoupled weight decay"},
      {"grad_clip", Type::Real, "1.0", "global gradient-norm clip (0 disables)"},
      {"unconditional", Type::Bool, "false", "train with the unconditional token only"},
      {"seed", Type::Int, "0", "seed for initialization, batching and sampling"},
      // sampling
      {"cfg_scale", Type::Real, "2.5", "classifier-free guidance scale"},
      {"temperature", Type::Real, "0.17", "Gumbel temperature"},
      {"iterations", Type::Int, "8", "unmasking iterations N"},
      {"inference_steps", Type::Int, "32", "denoising steps at sampling time"},
      {"order", Type::Text, "entropy", "unmask order: entropy, random or raster"},
      {"confidence", Type::Text, "surrogate", "confidence: surrogate or entropy"},
      {"deterministic", Type::Bool, "false", "threshold bits at 0.5 instead of sampling"},
      // probe
      {"probe_steps", Type::Int, "500", "linear-probe gradient steps"},
      {"probe_lr", Type::Real, "0.5", "linear-probe step size"},
      {"probe_l2", Type::Real, "0.0001", "linear-probe L2 penalty"},
  };
  return k;
}

Config::Config() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

Config Config::parse(std::string_view text) {
  Config c;
  c.merge_text(text);
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  Config c;
  c.merge_text(read_file(path), path.string());
  return c;
}

void Config::merge_text(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    if (eq == std::string::npos) fail(ErrorKind::Parse, where + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const Key* k = find_key(key);
    if (k == nullptr) {
      const std::string hint = suggest_key(key);
      fail(ErrorKind::Parse, where + ": unknown key \"" + key + "\"" +
                                 (hint.empty() ? std::string() : " (did you mean \"" + hint + "\"?)"));
    }
    check_value(*k, value, where);
    values_[key] = value;
  }
}

void Config::set(std::string_view key, std::string_view value) {
  const Key* k = find_key(key);
  if (k == nullptr) {
    const std::string hint = suggest_key(key);
    fail(ErrorKind::Parse, "unknown key \"" + std::string(key) + "\"" +
                               (hint.empty() ? std::string() : " (did you mean \"" + hint + "\"?)"));
  }
  const std::string v = trim(value);
  check_value(*k, v, "flag");
  values_[std::string(key)] = v;
}

bool Config::has(std::string_view key) const { return find_key(key) != nullptr; }

const std::string& Config::text(std::string_view key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::Internal, "unknown config key " + std::string(key));
  return it->second;
}

int Config::integer(std::string_view key) const {
  long long v = 0;
  parse_int(text(key), v);
  return static_cast<int>(v);
}

double Config::real(std::string_view key) const {
  double v = 0.0;
  parse_real(text(key), v);
  return v;
}

bool Config::boolean(std::string_view key) const {
  bool v = false;
  parse_bool(text(key), v);
  return v;
}

std::vector<int> Config::int_list(std::string_view key) const {
  bool ok = true;
  return split_ints(text(key), ok);
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + text(k.name) + "\n";
  return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string suggest_key(std::string_view unknown) {
  std::string best;
  std::size_t best_d = std::max<std::size_t>(2, unknown.size() / 3) + 1;
  for (const auto& k : Config::keys()) {
    const std::size_t d = edit_distance(unknown, k.name);
    if (d < best_d) {
      best_d = d;
      best = k.name;
    }
  }
  return best;
}

TokenizerConfig tokenizer_config(const Config& c) {
  TokenizerConfig t;
  t.channels = c.integer("channels");
  t.image_size = c.integer("image_size");
  t.downsample = c.integer("tok_downsample");
  t.code_bits = c.integer("code_bits");
  t.widths = c.int_list("tok_widths");
  t.validate();
  return t;
}

TokenizerTrainConfig tokenizer_train_config(const Config& c) {
  TokenizerTrainConfig t;
  t.epochs = c.integer("tok_epochs");
  t.batch_size = c.integer("tok_batch_size");
  t.learning_rate = c.real("tok_lr");
  t.seed = static_cast<std::uint64_t>(c.integer("seed"));
  return t;
}

ModelConfig model_config(const Config& c) {
  const TokenizerConfig tok = tokenizer_config(c);
  ModelConfig m;
  m.backbone.layers = c.integer("layers");
  m.backbone.heads = c.integer("heads");
  m.backbone.dim = c.integer("dim");
  m.backbone.seq_len = tok.grid_size() * tok.grid_size();
  m.backbone.num_classes = c.integer("num_classes");
  m.backbone.code_bits = tok.code_bits;
  m.backbone.mlp_ratio = c.integer("mlp_ratio");
  m.backbone.cond_dropout = c.real("cond_dropout");
  m.backbone.feature_layer = c.integer("feature_layer");
  m.backbone.shared_adaln = c.boolean("shared_adaln");
  m.transcoder.code_bits = tok.code_bits;
  m.transcoder.cond_dim = m.backbone.dim;
  m.transcoder.width = c.integer("tc_width");
  m.transcoder.layers = c.integer("tc_layers");
  m.transcoder.time_dim = c.integer("tc_time_dim");
  m.transcoder.total_steps = c.integer("timesteps");
  m.transcoder.target = parse_transcoder_target(c.text("target"));
  m.validate();
  return m;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.epochs = c.integer("epochs");
  t.batch_size = c.integer("batch_size");
  t.learning_rate = c.real("lr");
  t.weight_decay = c.real("weight_decay");
  t.grad_clip = c.real("grad_clip");
  t.unconditional = c.boolean("unconditional");
  t.seed = static_cast<std::uint64_t>(c.integer("seed"));
  t.validate();
  return t;
}

SamplerConfig sampler_config(const Config& c) {
  SamplerConfig s;
  s.iterations = c.integer("iterations");
  s.temperature = c.real("temperature");
  s.cfg_scale = c.real("cfg_scale");
  s.inference_steps = c.integer("inference_steps");
  s.order = parse_sample_order(c.text("order"));
  s.confidence = parse_confidence_mode(c.text("confidence"));
  s.deterministic = c.boolean("deterministic");
  s.seed = static_cast<std::uint64_t>(c.integer("seed"));
  s.validate();
  return s;
}

ProbeConfig probe_config(const Config& c) {
  ProbeConfig p;
  p.steps = c.integer("probe_steps");
  p.learning_rate = c.real("probe_lr");
  p.l2 = c.real("probe_l2");
  require(p.steps >= 0 && p.learning_rate > 0.0 && p.l2 >= 0.0, ErrorKind::InvalidInput, "invalid probe settings");
  return p;
}

}  // namespace bigr

#include "bigr/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "bigr/errors.hpp"
#include "bigr/store_io.hpp"

namespace bigr {

int RegionMask::count() const {
  return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](std::uint8_t c) { return c != 0; }));
}

RegionMask parse_region_mask(std::string_view text) {
  RegionMask region;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t");
    const std::string row = line.substr(first, last - first + 1);
    for (char c : row) {
      require(c == '0' || c == '1', ErrorKind::Parse,
              "region mask line " + std::to_string(line_no) + ": expected only '0' or '1'");
    }
    if (region.height == 0) region.width = static_cast<int>(row.size());
    require(static_cast<int>(row.size()) == region.width, ErrorKind::Parse,
            "region mask line " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                " columns, expected " + std::to_string(region.width));
    for (char c : row) region.cells.push_back(c == '1' ? 1 : 0);
    ++region.height;
  }
  require(region.height > 0, ErrorKind::Parse, "region mask is empty");
  return region;
}

RegionMask load_region_mask(const std::filesystem::path& path) { return parse_region_mask(read_file(path)); }

std::string format_region_mask(const RegionMask& region) {
  std::string out;
  for (int y = 0; y < region.height; ++y) {
    for (int x = 0; x < region.width; ++x) out += region.cells[static_cast<std::size_t>(y * region.width + x)] ? '1' : '0';
    out += '\n';
  }
  return out;
}

RegionMask region_from_pixels(const Image& mask, int factor) {
  require(factor >= 1 && mask.height % factor == 0 && mask.width % factor == 0, ErrorKind::InvalidInput,
          "pixel mask is not divisible by the token size");
  RegionMask region;
  region.height = mask.height / factor;
  region.width = mask.width / factor;
  for (int ty = 0; ty < region.height; ++ty) {
    for (int tx = 0; tx < region.width; ++tx) {
      int on = 0;
      for (int y = 0; y < factor; ++y) {
        for (int x = 0; x < factor; ++x) on += mask.at(ty * factor + y, tx * factor + x, 0) > 0.5f ? 1 : 0;
      }
      region.cells.push_back(2 * on >= factor * factor ? 1 : 0);
    }
  }
  return region;
}

namespace {

template <class T>
ZeroShotOutput finish(const Tokenizer<T>& tokenizer, SampleResult result) {
  ZeroShotOutput out;
  out.image = tokenizer.decode(result.grid);
  out.codes = std::move(result.grid);
  out.trace = std::move(result.trace);
  return out;
}

template <class T>
void check_pair(const Tokenizer<T>& tokenizer, const GenerativeModel<T>& model) {
  const int g = tokenizer.config().grid_size();
  if (tokenizer.config().code_bits != model.code_bits() || g * g != model.seq_len()) {
    fail(ErrorKind::CheckpointIncompatible, "tokenizer and model checkpoints do not describe the same token grid");
  }
}

}  // namespace

template <class T>
ZeroShotOutput infill(const Tokenizer<T>& tokenizer, const GenerativeModel<T>& model, const Image& image,
                      const RegionMask& region, int class_id, const SamplerConfig& config, Rng& rng) {
  check_pair(tokenizer, model);
  const BinaryCodeGrid codes = tokenizer.encode(image);
  require(region.height == codes.height() && region.width == codes.width(), ErrorKind::InvalidInput,
          "region mask is " + std::to_string(region.height) + "x" + std::to_string(region.width) +
              " but the token grid is " + std::to_string(codes.height()) + "x" + std::to_string(codes.width()));
  const int on = region.count();
  require(on > 0 && on < static_cast<int>(region.cells.size()), ErrorKind::InvalidInput,
          "region mask must contain both generated and kept tokens");
  GenerateRequest request;
  request.class_id = class_id;
  request.initial = codes;
  request.generate = region.cells;
  return finish(tokenizer, generate(model, request, config, rng));
}

template <class T>
std::vector<double> interpolated_embedding(const GenerativeModel<T>& model, int class_a, int class_b, double lambda) {
  const int c = model.config().backbone.num_classes;
  require(class_a >= 0 && class_a < c && class_b >= 0 && class_b < c, ErrorKind::InvalidInput,
          "interpolation classes must be in [0, " + std::to_string(c) + ")");
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::InvalidInput, "lambda must be in [0, 1]");
  const auto& table = model.backbone().class_table();
  std::vector<double> out(static_cast<std::size_t>(table.cols()));
  for (Eigen::Index j = 0; j < table.cols(); ++j) {
    const double a = static_cast<double>(table(class_a, j));
    const double b = static_cast<double>(table(class_b, j));
    out[static_cast<std::size_t>(j)] = lambda == 0.0 ? a : lambda == 1.0 ? b : (1.0 - lambda) * a + lambda * b;
  }
  return out;
}

template <class T>
ZeroShotOutput interpolate_classes(const Tokenizer<T>& tokenizer, const GenerativeModel<T>& model, int class_a,
                                   int class_b, double lambda, const SamplerConfig& config, Rng& rng) {
  check_pair(tokenizer, model);
  GenerateRequest request;
  request.class_id = class_a;
  request.cond_embedding = interpolated_embedding(model, class_a, class_b, lambda);
  return finish(tokenizer, generate(model, request, config, rng));
}

template <class T>
ZeroShotOutput enrich(const Tokenizer<T>& tokenizer, const GenerativeModel<T>& model, const Image& low,
                      const SamplerConfig& config, Rng& rng) {
  check_pair(tokenizer, model);
  const int size = tokenizer.config().image_size;
  require(low.channels == tokenizer.config().channels && low.height * 2 == size && low.width * 2 == size,
          ErrorKind::InvalidInput,
          "enrich expects a " + std::to_string(size / 2) + "x" + std::to_string(size / 2) + " image, got " +
              std::to_string(low.height) + "x" + std::to_string(low.width));
  const Image up = resize_bilinear(low, size, size);
  GenerateRequest request;
  request.class_id = model.uncond_id();
  request.first_candidates = tokenizer.encode(up);
  return finish(tokenizer, generate(model, request, config, rng));
}

template ZeroShotOutput infill(const Tokenizer<float>&, const GenerativeModel<float>&, const Image&, const RegionMask&,
                               int, const SamplerConfig&, Rng&);
template ZeroShotOutput infill(const Tokenizer<double>&, const GenerativeModel<double>&, const Image&,
                               const RegionMask&, int, const SamplerConfig&, Rng&);
template std::vector<double> interpolated_embedding(const GenerativeModel<float>&, int, int, double);
template std::vector<double> interpolated_embedding(const GenerativeModel<double>&, int, int, double);
template ZeroShotOutput interpolate_classes(const Tokenizer<float>&, const GenerativeModel<float>&, int, int, double,
                                            const SamplerConfig&, Rng&);
template ZeroShotOutput interpolate_classes(const Tokenizer<double>&, const GenerativeModel<double>&, int, int, double,
                                            const SamplerConfig&, Rng&);
template ZeroShotOutput enrich(const Tokenizer<float>&, const GenerativeModel<float>&, const Image&,
                               const SamplerConfig&, Rng&);
template ZeroShotOutput enrich(const Tokenizer<double>&, const GenerativeModel<double>&, const Image&,
                               const SamplerConfig&, Rng&);

}  // namespace bigr

#include "bigr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "bigr/errors.hpp"

namespace bigr {

bool Image::valid() const {
  if (channels < 1 || height < 1 || width < 1) return false;
  if (pixels.size() != static_cast<std::size_t>(channels) * height * width) return false;
  return std::all_of(pixels.begin(), pixels.end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

void clamp_unit(Image& image) {
  for (float& v : image.pixels) v = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
}

double mse(const Image& a, const Image& b) {
  require(a.channels == b.channels && a.height == b.height && a.width == b.width,
          ErrorKind::InvalidInput, "image shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

Image resize_bilinear(const Image& image, int height, int width) {
  require(height >= 1 && width >= 1, ErrorKind::InvalidInput, "resize target must be positive");
  Image out(image.channels, height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    // Align pixel centers.
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bot = (1 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

Image downsample_box(const Image& image, int factor) {
  require(factor >= 1 && image.height % factor == 0 && image.width % factor == 0,
          ErrorKind::InvalidInput, "image size not divisible by downsample factor");
  Image out(image.channels, image.height / factor, image.width / factor);
  const float norm = 1.0f / static_cast<float>(factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        float acc = 0.0f;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) acc += image.at(y * factor + dy, x * factor + dx, c);
        }
        out.at(y, x, c) = acc * norm;
      }
    }
  }
  return out;
}

Image tile_images(std::span<const Image> images, int columns) {
  require(!images.empty() && columns >= 1, ErrorKind::InvalidInput, "nothing to tile");
  const Image& first = images.front();
  const int cols = std::min<int>(columns, static_cast<int>(images.size()));
  const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
  Image out(first.channels, rows * first.height, cols * first.width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = images[i];
    require(im.channels == first.channels && im.height == first.height && im.width == first.width,
            ErrorKind::InvalidInput, "tiled images must share a shape");
    const int oy = static_cast<int>(i) / cols * first.height;
    const int ox = static_cast<int>(i) % cols * first.width;
    for (int y = 0; y < im.height; ++y) {
      for (int x = 0; x < im.width; ++x) {
        for (int c = 0; c < im.channels; ++c) out.at(oy + y, ox + x, c) = im.at(y, x, c);
      }
    }
  }
  return out;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  require(image.channels == 3 || image.channels == 1, ErrorKind::InvalidInput,
          "PNM output supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Load, "cannot open " + path.string() + " for writing");
  out << (image.channels == 3 ? "P6" : "P5") << "\n" << image.width << " " << image.height << "\n255\n";
  std::string bytes(image.pixels.size(), '\0');
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const float v = std::isfinite(image.pixels[i]) ? std::clamp(image.pixels[i], 0.0f, 1.0f) : 0.0f;
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Load, "failed writing " + path.string());
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  while (true) {
    const int ch = in.get();
    if (ch == EOF) break;
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Load, "cannot open image " + path.string());
  const std::string magic = next_token(in);
  require(magic == "P6" || magic == "P5", ErrorKind::Parse,
          path.string() + ": only binary PPM (P6) and PGM (P5) are supported");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token(in));
    height = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, path.string() + ": malformed PNM header");
  }
  require(width > 0 && height > 0 && maxval > 0 && maxval < 256, ErrorKind::Parse,
          path.string() + ": unsupported PNM dimensions or depth");
  Image image(magic == "P6" ? 3 : 1, height, width);
  std::string bytes(image.pixels.size(), '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(in.gcount() == static_cast<std::streamsize>(bytes.size()), ErrorKind::Parse,
          path.string() + ": truncated pixel data");
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    image.pixels[i] = static_cast<float>(static_cast<unsigned char>(bytes[i])) / static_cast<float>(maxval);
  }
  return image;
}

}  // namespace bigr

#include "sparsecut/patching.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

ImageTensor ImageTensor::filled(std::size_t height, std::size_t width, std::size_t channels,
                                double value) {
  return ImageTensor{height, width, channels,
                     std::vector<double>(height * width * channels, value)};
}

std::size_t PatchBundle::effective_resolution() const {
  if (patches.empty()) return 0;
  return patches.front().height * std::max<std::size_t>(tiles, 1);
}

std::size_t tokens_per_patch(std::size_t base_resolution, std::size_t patch_size) {
  if (patch_size == 0 || base_resolution % patch_size != 0) {
    throw UsageError("resolution " + std::to_string(base_resolution) +
                     " is not divisible by patch size " + std::to_string(patch_size));
  }
  const std::size_t side = base_resolution / patch_size;
  return side * side;
}

EmbedderWeights EmbedderWeights::random(std::size_t base_resolution, std::size_t patch_size,
                                        std::size_t channels, std::size_t width,
                                        SeededRng& rng) {
  const std::size_t tokens = tokens_per_patch(base_resolution, patch_size);
  const std::size_t fan_in = patch_size * patch_size * channels;
  EmbedderWeights w;
  w.patch_size = patch_size;
  w.channels = channels;
  w.projection = Tensor::randn({fan_in, width}, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  w.positional = Tensor::randn({tokens, width}, rng, 0.02);
  return w;
}

ImageTensor resize_bilinear(const ImageTensor& img, std::size_t height, std::size_t width) {
  if (img.height == 0 || img.width == 0) throw UsageError("resize: empty image");
  ImageTensor out = ImageTensor::filled(height, width, img.channels, 0.0);
  const auto scale = [](std::size_t in, std::size_t out_len) {
    return out_len > 1 ? static_cast<double>(in - 1) / static_cast<double>(out_len - 1) : 0.0;
  };
  const double sy = scale(img.height, height);
  const double sx = scale(img.width, width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) * sy;
    const auto y0 = std::min(static_cast<std::size_t>(fy), img.height - 1);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) * sx;
      const auto x0 = std::min(static_cast<std::size_t>(fx), img.width - 1);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) + wx * (img.at(y0, x1, c) - img.at(y0, x0, c));
        const double bot = img.at(y1, x0, c) + wx * (img.at(y1, x1, c) - img.at(y1, x0, c));
        out.at(y, x, c) = top + wy * (bot - top);
      }
    }
  }
  return out;
}

std::vector<ImageTensor> split_tiles(const ImageTensor& img, std::size_t tiles) {
  if (img.height != img.width) throw UsageError("split_tiles: image must be square");
  if (tiles == 0 || img.height % tiles != 0) {
    throw UsageError("split_tiles: side not divisible by tile count");
  }
  const std::size_t side = img.height / tiles;
  std::vector<ImageTensor> out;
  out.reserve(tiles * tiles);
  for (std::size_t ty = 0; ty < tiles; ++ty) {
    for (std::size_t tx = 0; tx < tiles; ++tx) {
      ImageTensor tile = ImageTensor::filled(side, side, img.channels, 0.0);
      for (std::size_t y = 0; y < side; ++y) {
        const double* src = &img.values[((ty * side + y) * img.width + tx * side) * img.channels];
        std::copy(src, src + side * img.channels, &tile.values[y * side * img.channels]);
      }
      out.push_back(std::move(tile));
    }
  }
  return out;
}

ImageTensor assemble_tiles(std::span<const ImageTensor> tiles, std::size_t per_side) {
  if (tiles.size() != per_side * per_side || tiles.empty()) {
    throw UsageError("assemble_tiles: expected per_side^2 tiles");
  }
  const std::size_t side = tiles.front().height;
  const std::size_t channels = tiles.front().channels;
  ImageTensor out = ImageTensor::filled(side * per_side, side * per_side, channels, 0.0);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const std::size_t ty = t / per_side, tx = t % per_side;
    for (std::size_t y = 0; y < side; ++y) {
      const double* src = &tiles[t].values[y * side * channels];
      std::copy(src, src + side * channels,
                &out.values[((ty * side + y) * out.width + tx * side) * channels]);
    }
  }
  return out;
}

PatchBundle build_bundle(const ImageTensor& img, std::size_t base_resolution, std::size_t tiles,
                         bool high_res) {
  if (img.height != img.width) {
    throw UsageError("build_bundle: input must be square, got " + std::to_string(img.height) +
                     "x" + std::to_string(img.width));
  }
  if (img.channels != 1 && img.channels != 3) {
    throw UsageError("build_bundle: channels must be 1 or 3");
  }
  if (base_resolution == 0) throw UsageError("build_bundle: base resolution must be positive");
  PatchBundle bundle;
  bundle.patches.push_back(resize_bilinear(img, base_resolution, base_resolution));
  if (!high_res) return bundle;
  if (tiles < 2) throw UsageError("build_bundle: high-res mode needs tiles >= 2");
  const std::size_t upsampled = tiles * base_resolution;
  for (ImageTensor& tile : split_tiles(resize_bilinear(img, upsampled, upsampled), tiles)) {
    bundle.patches.push_back(std::move(tile));
  }
  bundle.tiles = tiles;
  return bundle;
}

Tensor patch_embed(const ImageTensor& patch, const EmbedderWeights& w, MacCounter* counter) {
  const std::size_t p = w.patch_size;
  if (patch.height != patch.width) throw UsageError("patch_embed: patch must be square");
  const std::size_t tokens = tokens_per_patch(patch.height, p);
  if (patch.channels != w.channels) throw DimensionError("patch_embed: channel count mismatch");
  const std::size_t fan_in = p * p * patch.channels;
  if (w.projection.rows() != fan_in) throw DimensionError("patch_embed: projection rows");
  if (w.positional.rows() != tokens || w.positional.cols() != w.projection.cols()) {
    throw DimensionError("patch_embed: positional table is " +
                         shape_to_string(w.positional.shape()) + ", expected " +
                         std::to_string(tokens) + " rows");
  }
  const std::size_t grid = patch.height / p;
  Tensor flat({tokens, fan_in});
  for (std::size_t by = 0; by < grid; ++by) {
    for (std::size_t bx = 0; bx < grid; ++bx) {
      auto dst = flat.row(by * grid + bx);
      std::size_t k = 0;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t c = 0; c < patch.channels; ++c)
            dst[k++] = patch.at(by * p + y, bx * p + x, c);
    }
  }
  Tensor out = matmul(flat, w.projection, counter);
  add_inplace(out, w.positional);
  return out;
}

Tensor embed_bundle(const PatchBundle& bundle, const EmbedderWeights& w, MacCounter* counter) {
  std::vector<Tensor> per_patch;
  per_patch.reserve(bundle.count());
  for (const ImageTensor& patch : bundle.patches) per_patch.push_back(patch_embed(patch, w, counter));
  return stack(per_patch);
}

ImageTensor synthetic_image(std::size_t resolution, std::size_t channels, SeededRng& rng) {
  ImageTensor img = ImageTensor::filled(resolution, resolution, channels, 0.0);
  std::vector<double> phase(channels), tilt(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    phase[c] = rng.uniform(0.0, 6.283185307179586);
    tilt[c] = rng.uniform(0.25, 0.75);
  }
  const double denom = resolution > 1 ? static_cast<double>(resolution - 1) : 1.0;
  for (std::size_t y = 0; y < resolution; ++y) {
    for (std::size_t x = 0; x < resolution; ++x) {
      const double u = static_cast<double>(x) / denom;
      const double v = static_cast<double>(y) / denom;
      for (std::size_t c = 0; c < channels; ++c) {
        const double ramp = tilt[c] * u + (1.0 - tilt[c]) * v;
        const double wave = 0.1 * std::sin(12.0 * u + phase[c]) * std::cos(9.0 * v);
        img.at(y, x, c) = std::clamp(0.9 * ramp + wave + 0.05, 0.0, 1.0);
      }
    }
  }
  return img;
}

namespace {

std::string next_token(std::istream& in) {
  std::string token;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(ch);
  }
  return token;
}

std::size_t parse_extent(const std::string& token, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError(path.string() + ": malformed header field '" + token + "'");
  }
}

}  // namespace

ImageTensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P6" && magic != "P5") throw UsageError(path.string() + ": not a binary PPM/PGM");
  const std::size_t width = parse_extent(next_token(in), path);
  const std::size_t height = parse_extent(next_token(in), path);
  const std::size_t maxval = parse_extent(next_token(in), path);
  if (maxval != 255) throw UsageError(path.string() + ": only 8-bit PPM (maxval 255) supported");
  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> bytes(width * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw UsageError(path.string() + ": truncated pixel data");
  }
  ImageTensor img = ImageTensor::filled(height, width, channels, 0.0);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.values[i] = bytes[i] / 255.0;
  return img;
}

void write_ppm(const std::filesystem::path& path, const ImageTensor& img) {
  if (img.channels != 3 && img.channels != 1) throw UsageError("write_ppm: 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.values) {
    const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(byte));
  }
}

ImageTensor read_raw_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream fields(header);
  std::string h, w, c;
  fields >> h >> w >> c;
  ImageTensor img = ImageTensor::filled(parse_extent(h, path), parse_extent(w, path),
                                        parse_extent(c, path), 0.0);
  for (double& v : img.values) {
    std::uint32_t bits = 0;
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
      throw UsageError(path.string() + ": truncated float32 data");
    }
    bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    v = static_cast<double>(std::bit_cast<float>(bits));
  }
  return img;
}

void write_raw_image(const std::filesystem::path& path, const ImageTensor& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << img.height << ' ' << img.width << ' ' << img.channels << '\n';
  for (double v : img.values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                       static_cast<char>((bits >> 16) & 0xff),
                       static_cast<char>((bits >> 24) & 0xff)};
    out.write(b, 4);
  }
}

ImageTensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] == 'P' && (magic[1] == '6' || magic[1] == '5')) return read_ppm(path);
  return read_raw_image(path);
}

}  // namespace sparsecut

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "sparsecut/tensor.hpp"

namespace sparsecut {

class SeededRng;

// Pixels in [0, 1], stored height x width x channels (interleaved).
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> values;

  static ImageTensor filled(std::size_t height, std::size_t width, std::size_t channels,
                            double value);

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return values[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return values[(y * width + x) * channels + c];
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

// Patch 0 is the low-resolution view; 1..N-1 are high-resolution tiles in
// row-major order.
struct PatchBundle {
  std::vector<ImageTensor> patches;
  std::size_t tiles = 0;  // tiles per side; 0 in low-res-only mode

  [[nodiscard]] std::size_t count() const { return patches.size(); }
  [[nodiscard]] std::size_t effective_resolution() const;
};

struct EmbedderWeights {
  Tensor projection;  // (P*P*channels) x D_v
  Tensor positional;  // M_v x D_v, shared by every patch of a bundle
  std::size_t patch_size = 0;
  std::size_t channels = 0;

  [[nodiscard]] std::size_t width() const { return projection.cols(); }
  [[nodiscard]] std::size_t tokens() const { return positional.rows(); }

  // projection ~ N(0, 1/fan_in); positional ~ N(0, 0.02^2).
  static EmbedderWeights random(std::size_t base_resolution, std::size_t patch_size,
                                std::size_t channels, std::size_t width, SeededRng& rng);
};

[[nodiscard]] std::size_t tokens_per_patch(std::size_t base_resolution, std::size_t patch_size);

// Bilinear resampling with corner-aligned sampling grids: output pixel 0 maps
// to input pixel 0 and the last output pixel maps to the last input pixel.
ImageTensor resize_bilinear(const ImageTensor& img, std::size_t height, std::size_t width);

// Cuts a square image into tiles x tiles blocks, row-major.
std::vector<ImageTensor> split_tiles(const ImageTensor& img, std::size_t tiles);
ImageTensor assemble_tiles(std::span<const ImageTensor> tiles, std::size_t per_side);

PatchBundle build_bundle(const ImageTensor& img, std::size_t base_resolution, std::size_t tiles,
                         bool high_res);

// Non-overlapping PxP blocks flattened in (row, column, channel) order,
// projected and offset by the positional table. Same as a stride-P
// convolution with kernel P.
Tensor patch_embed(const ImageTensor& patch, const EmbedderWeights& w,
                   MacCounter* counter = nullptr);

// N x M_v x D_v, bundle order preserved.
Tensor embed_bundle(const PatchBundle& bundle, const EmbedderWeights& w,
                    MacCounter* counter = nullptr);

// Seeded smooth gradient pattern with a little texture; used when no image
// file is supplied.
ImageTensor synthetic_image(std::size_t resolution, std::size_t channels, SeededRng& rng);

// P6 8-bit PPM (maxval 255); P5 grayscale is accepted on read.
ImageTensor read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageTensor& img);

// ASCII line "height width channels" then height*width*channels float32
// little-endian values in interleaved order.
ImageTensor read_raw_image(const std::filesystem::path& path);
void write_raw_image(const std::filesystem::path& path, const ImageTensor& img);

// Dispatches on the magic bytes: "P5"/"P6" is PPM, anything else is raw.
ImageTensor read_image(const std::filesystem::path& path);

}  // namespace sparsecut

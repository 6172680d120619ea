#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sparsecut/errors.hpp"
#include "sparsecut/patching.hpp"
#include "sparsecut/rng.hpp"

using namespace sparsecut;

namespace {

ImageTensor random_image(std::size_t side, std::size_t channels, std::uint64_t seed) {
  SeededRng rng(seed);
  ImageTensor img = ImageTensor::filled(side, side, channels, 0.0);
  for (double& v : img.values) v = rng.uniform();
  return img;
}

EmbedderWeights random_embedder(std::size_t res, std::size_t p, std::size_t ch, std::size_t d,
                                std::uint64_t seed) {
  SeededRng rng(seed);
  return EmbedderWeights::random(res, p, ch, d, rng);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sparsecut_patching_" + name);
}

}  // namespace

TEST(PatchingTest, LlavaGeometry) {
  EXPECT_EQ(tokens_per_patch(336, 14), 576u);
  const ImageTensor img = ImageTensor::filled(336, 336, 3, 0.5);
  const PatchBundle b = build_bundle(img, 336, 2, true);
  EXPECT_EQ(b.count(), 5u);
  EXPECT_EQ(b.effective_resolution(), 672u);
  for (const ImageTensor& p : b.patches) {
    EXPECT_EQ(p.height, 336u);
    EXPECT_EQ(p.width, 336u);
  }
}

TEST(PatchingTest, LowResOnlyIsTheResizedImage) {
  const ImageTensor img = random_image(20, 3, 1);
  const PatchBundle b = build_bundle(img, 12, 2, false);
  ASSERT_EQ(b.count(), 1u);
  EXPECT_EQ(b.patches[0], resize_bilinear(img, 12, 12));
  EXPECT_EQ(b.effective_resolution(), 12u);
}

TEST(PatchingTest, ConstantImageStaysConstant) {
  const ImageTensor img = ImageTensor::filled(17, 17, 3, 0.37);
  const PatchBundle b = build_bundle(img, 8, 2, true);
  ASSERT_EQ(b.count(), 5u);
  for (const ImageTensor& p : b.patches)
    for (double v : p.values) EXPECT_EQ(v, 0.37);
}

TEST(PatchingTest, BilinearCornerAlignedHandValues) {
  ImageTensor img = ImageTensor::filled(2, 2, 1, 0.0);
  img.at(0, 0, 0) = 0.0;
  img.at(0, 1, 0) = 1.0;
  img.at(1, 0, 0) = 2.0;
  img.at(1, 1, 0) = 3.0;
  const ImageTensor out = resize_bilinear(img, 3, 3);
  const double expected[3][3] = {{0.0, 0.5, 1.0}, {1.0, 1.5, 2.0}, {2.0, 2.5, 3.0}};
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) EXPECT_DOUBLE_EQ(out.at(y, x, 0), expected[y][x]);
}

TEST(PatchingTest, TilesReassembleUpsampledImage) {
  const ImageTensor img = random_image(13, 3, 2);
  const PatchBundle b = build_bundle(img, 6, 2, true);
  const std::span<const ImageTensor> tiles(b.patches.data() + 1, 4);
  EXPECT_EQ(assemble_tiles(tiles, 2), resize_bilinear(img, 12, 12));
}

TEST(PatchingTest, TileSplitRoundTrip) {
  const ImageTensor img = random_image(12, 1, 3);
  const auto tiles = split_tiles(img, 3);
  ASSERT_EQ(tiles.size(), 9u);
  EXPECT_EQ(tiles[5].at(0, 0, 0), img.at(4, 8, 0));
  EXPECT_EQ(assemble_tiles(tiles, 3), img);
}

TEST(PatchingTest, RejectsBadInputs) {
  EXPECT_THROW(build_bundle(ImageTensor::filled(4, 5, 3, 0.0), 4, 2, true), UsageError);
  EXPECT_THROW(build_bundle(ImageTensor::filled(4, 4, 3, 0.0), 4, 1, true), UsageError);
  EXPECT_THROW(split_tiles(ImageTensor::filled(5, 5, 1, 0.0), 2), UsageError);
  EXPECT_THROW((void)tokens_per_patch(30, 7), UsageError);
  const EmbedderWeights w = random_embedder(8, 2, 3, 4, 1);
  EXPECT_THROW(patch_embed(ImageTensor::filled(9, 9, 3, 0.0), w), UsageError);
}

TEST(PatchEmbedTest, ZeroImageZeroPositionalGivesZeros) {
  EmbedderWeights w = random_embedder(8, 2, 3, 5, 4);
  w.positional = Tensor::zeros(w.positional.shape());
  const Tensor out = patch_embed(ImageTensor::filled(8, 8, 3, 0.0), w);
  EXPECT_EQ(out.shape(), (Shape{16, 5}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(PatchEmbedTest, FourPixelToyMatchesUnrolledOracle) {
  // 4x4 single-channel image, P = 2, D = 2.
  ImageTensor img = ImageTensor::filled(4, 4, 1, 0.0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) img.at(y, x, 0) = static_cast<double>(y * 4 + x);
  EmbedderWeights w;
  w.patch_size = 2;
  w.channels = 1;
  // column 0 sums the block; column 1 picks (top-left) - (bottom-right)
  w.projection = Tensor::from_rows({{1, 1}, {1, 0}, {1, 0}, {1, -1}});
  w.positional = Tensor::from_rows({{0, 0}, {10, 0}, {20, 0}, {30, 0}});
  const Tensor out = patch_embed(img, w);
  // block (0,0): 0 1 / 4 5; block (0,1): 2 3 / 6 7; block (1,0): 8 9 / 12 13; block (1,1): 10 11 / 14 15
  const Tensor expected = Tensor::from_rows({{0 + 1 + 4 + 5, 0 - 5},
                                            {10 + 2 + 3 + 6 + 7, 2 - 7},
                                            {20 + 8 + 9 + 12 + 13, 8 - 13},
                                            {30 + 10 + 11 + 14 + 15, 10 - 15}});
  EXPECT_EQ(out, expected);
}

TEST(PatchEmbedTest, ChannelInterleavedFlattenOrder) {
  ImageTensor img = ImageTensor::filled(2, 2, 3, 0.0);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<double>(i);
  EmbedderWeights w;
  w.patch_size = 2;
  w.channels = 3;
  w.projection = Tensor::identity(12);
  w.positional = Tensor::zeros({1, 12});
  const Tensor out = patch_embed(img, w);
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(out(0, k), static_cast<double>(k));
}

TEST(PatchEmbedTest, LinearWithoutPositional) {
  EmbedderWeights w = random_embedder(8, 4, 3, 6, 5);
  w.positional = Tensor::zeros(w.positional.shape());
  const ImageTensor a = random_image(8, 3, 6);
  const ImageTensor b = random_image(8, 3, 7);
  const double alpha = 0.7, beta = -1.3;
  ImageTensor mix = a;
  for (std::size_t i = 0; i < mix.values.size(); ++i)
    mix.values[i] = alpha * a.values[i] + beta * b.values[i];
  const Tensor lhs = patch_embed(mix, w);
  const Tensor rhs = add(scale(patch_embed(a, w), alpha), scale(patch_embed(b, w), beta));
  EXPECT_LE(max_abs_diff(lhs, rhs), 1e-10);
}

TEST(PatchEmbedTest, CountsMacs) {
  const EmbedderWeights w = random_embedder(8, 2, 3, 5, 8);
  MacCounter counter;
  patch_embed(random_image(8, 3, 9), w, &counter);
  EXPECT_EQ(counter.count, 16u * 12u * 5u);
}

TEST(EmbedBundleTest, ShapesAndTokenCountIndependentOfN) {
  const EmbedderWeights w = random_embedder(8, 2, 3, 4, 10);
  const ImageTensor img = random_image(16, 3, 11);
  const Tensor low = embed_bundle(build_bundle(img, 8, 2, false), w);
  EXPECT_EQ(low.shape(), (Shape{1, 16, 4}));
  const Tensor high = embed_bundle(build_bundle(img, 8, 2, true), w);
  EXPECT_EQ(high.shape(), (Shape{5, 16, 4}));
  const Tensor higher = embed_bundle(build_bundle(img, 8, 3, true), w);
  EXPECT_EQ(higher.shape(), (Shape{10, 16, 4}));
}

TEST(EmbedBundleTest, PermutingTilesPermutesSlices) {
  const EmbedderWeights w = random_embedder(8, 2, 3, 4, 12);
  const PatchBundle b = build_bundle(random_image(16, 3, 13), 8, 2, true);
  PatchBundle permuted = b;
  const std::size_t order[4] = {3, 1, 4, 2};
  for (std::size_t t = 0; t < 4; ++t) permuted.patches[1 + t] = b.patches[order[t]];
  const Tensor x = embed_bundle(b, w);
  const Tensor y = embed_bundle(permuted, w);
  EXPECT_EQ(y.slice(0), x.slice(0));
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(y.slice(1 + t), x.slice(order[t]));
}

TEST(ImageIoTest, PpmRoundTripAtEightBits) {
  ImageTensor img = ImageTensor::filled(3, 2, 3, 0.0);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    img.values[i] = static_cast<double>(i * 13 % 256) / 255.0;
  const auto path = temp_path("rt.ppm");
  write_ppm(path, img);
  const ImageTensor back = read_image(path);
  ASSERT_EQ(back.height, 3u);
  ASSERT_EQ(back.width, 2u);
  ASSERT_EQ(back.channels, 3u);
  for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_NEAR(back.values[i], img.values[i], 1e-12);
  std::filesystem::remove(path);
}

TEST(ImageIoTest, GrayscalePgmIsAccepted) {
  const auto path = temp_path("gray.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# comment\n2 1\n255\n";
    out.put(static_cast<char>(0));
    out.put(static_cast<char>(255));
  }
  const ImageTensor img = read_image(path);
  EXPECT_EQ(img.channels, 1u);
  EXPECT_EQ(img.values, (std::vector<double>{0.0, 1.0}));
  std::filesystem::remove(path);
}

TEST(ImageIoTest, RawRoundTripAtFloat32) {
  const ImageTensor img = random_image(4, 3, 14);
  const auto path = temp_path("rt.raw");
  write_raw_image(path, img);
  const ImageTensor back = read_image(path);
  ASSERT_EQ(back.values.size(), img.values.size());
  for (std::size_t i = 0; i < img.values.size(); ++i)
    EXPECT_EQ(back.values[i], static_cast<double>(static_cast<float>(img.values[i])));
  std::filesystem::remove(path);
}

TEST(ImageIoTest, TruncatedFileThrows) {
  const auto path = temp_path("short.ppm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n4 4\n255\nabc";
  }
  EXPECT_ANY_THROW(read_image(path));
  std::filesystem::remove(path);
}

TEST(SyntheticImageTest, SeededAndInRange) {
  SeededRng a(3), b(3);
  const ImageTensor x = synthetic_image(16, 3, a);
  EXPECT_EQ(x, synthetic_image(16, 3, b));
  for (double v : x.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

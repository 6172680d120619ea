#include <gtest/gtest.h>

#include <sstream>

#include "sparsecut/errors.hpp"
#include "sparsecut/flops_model.hpp"

using namespace sparsecut;

namespace {

CostScenario toy(FusionMode mode, std::size_t patches) {
  CostScenario sc;
  sc.mode = mode;
  sc.patches = patches;
  sc.base_resolution = 8;
  sc.patch_size = 2;
  sc.channels = 3;
  sc.text_length = 6;
  sc.vit_layers = 4;
  sc.vit_width = 8;
  sc.vit_heads = 2;
  sc.llm_layers = 2;
  sc.llm_width = 8;
  sc.llm_heads = 2;
  sc.vocab = 10;
  sc.shortcuts = 2;
  return sc;
}

// Per-component MACs written out term by term for the toy geometry.
struct HandCount {
  std::uint64_t encoder, adapter, attention, mlp, head;
};

HandCount hand_count(const CostScenario& sc) {
  const std::uint64_t n = sc.patches, m = sc.visual_tokens(), dv = sc.vit_width,
                      dt = sc.llm_width, hv = 4 * dv, ht = 4 * dt, ha = 4 * dv;
  const std::uint64_t pixels = sc.patch_size * sc.patch_size * sc.channels;
  HandCount h{};
  h.encoder = n * m * pixels * dv;
  for (std::size_t i = 0; i < sc.vit_layers; ++i)
    for (std::uint64_t p = 0; p < n; ++p)
      h.encoder += 3 * m * dv * dv + m * m * dv + m * m * dv + m * dv * dv + m * dv * hv + m * hv * dv;
  std::uint64_t c = sc.text_length;
  if (sc.mode == FusionMode::Concat) {
    h.adapter = n * m * dv * ha + n * m * ha * dt;
    c += n * m;
  } else {
    const std::uint64_t k = n > 1 ? (n - 1) * m : m;
    for (std::size_t s = 0; s < sc.shortcuts; ++s)
      h.adapter += m * dv * dv + 2 * k * dv * dv + m * k * dv + m * k * dv + m * dv * dv +
                   m * dv * ha + m * ha * dt;
    c += m;
  }
  for (std::size_t j = 0; j < sc.llm_layers; ++j) {
    h.attention += 3 * c * dt * dt + c * c * dt + c * c * dt + c * dt * dt;
    h.mlp += c * dt * ht + c * ht * dt;
  }
  h.head = c * dt * sc.vocab;
  return h;
}

}  // namespace

TEST(FlopsModelTest, ToyMatchesHandCount) {
  for (auto mode : {FusionMode::Shortcut, FusionMode::Concat}) {
    for (std::size_t n : {1u, 5u}) {
      const CostScenario sc = toy(mode, n);
      const CostReport r = analytic_flops(sc);
      const HandCount h = hand_count(sc);
      EXPECT_EQ(r.encoder_macs, h.encoder);
      EXPECT_EQ(r.adapter_macs, h.adapter);
      EXPECT_EQ(r.decoder_attention_macs, h.attention);
      EXPECT_EQ(r.decoder_mlp_macs, h.mlp);
      EXPECT_EQ(r.head_macs, h.head);
      EXPECT_DOUBLE_EQ(r.total_flops(), 2.0 * static_cast<double>(r.total_macs()));
    }
  }
}

TEST(FlopsModelTest, LlavaLowResolutionFigure) {
  const CostReport r = analytic_flops(CostScenario::llava15(FusionMode::Concat, false));
  EXPECT_EQ(r.context_length, 576u + 64u);
  EXPECT_NEAR(r.total_flops() / 1e12, 8.04, 0.15 * 8.04);
}

TEST(FlopsModelTest, LlavaHighResolutionFigures) {
  const CostReport shortcut = analytic_flops(CostScenario::llava15(FusionMode::Shortcut, true));
  const CostReport concat = analytic_flops(CostScenario::llava15(FusionMode::Concat, true));
  EXPECT_EQ(concat.context_length, 5u * 576u + 64u);
  EXPECT_NEAR(shortcut.total_flops() / 1e12, 9.6, 0.15 * 9.6);
  EXPECT_NEAR(concat.total_flops() / 1e12, 43.62, 0.15 * 43.62);
  EXPECT_GE(concat.total_flops() / shortcut.total_flops(), 4.0);
}

TEST(FlopsModelTest, ShortcutDecoderCostIndependentOfN) {
  const CostReport base = analytic_flops(toy(FusionMode::Shortcut, 1));
  for (std::size_t n : {2u, 5u, 10u, 17u}) {
    const CostReport r = analytic_flops(toy(FusionMode::Shortcut, n));
    EXPECT_EQ(r.decoder_attention_macs, base.decoder_attention_macs);
    EXPECT_EQ(r.decoder_mlp_macs, base.decoder_mlp_macs);
    EXPECT_EQ(r.context_length, base.context_length);
  }
}

TEST(FlopsModelTest, ConcatAttentionStrictlyIncreasingInN) {
  std::uint64_t prev = 0;
  for (std::size_t n = 1; n <= 10; ++n) {
    const std::uint64_t cost = analytic_flops(toy(FusionMode::Concat, n)).decoder_attention_macs;
    EXPECT_GT(cost, prev);
    prev = cost;
  }
}

TEST(FlopsModelTest, ModesAgreeOnDecoderAtSinglePatch) {
  const CostReport a = analytic_flops(toy(FusionMode::Shortcut, 1));
  const CostReport b = analytic_flops(toy(FusionMode::Concat, 1));
  EXPECT_EQ(a.decoder_attention_macs, b.decoder_attention_macs);
  EXPECT_EQ(a.decoder_mlp_macs, b.decoder_mlp_macs);
}

TEST(FlopsModelTest, NoVisualTokensMakesModesIdentical) {
  CostScenario a = toy(FusionMode::Shortcut, 5);
  a.base_resolution = 0;
  CostScenario b = a;
  b.mode = FusionMode::Concat;
  EXPECT_EQ(a.visual_tokens(), 0u);
  EXPECT_EQ(analytic_flops(a).decoder_attention_macs, analytic_flops(b).decoder_attention_macs);
  EXPECT_EQ(analytic_flops(a).decoder_mlp_macs, analytic_flops(b).decoder_mlp_macs);
}

TEST(FlopsModelTest, ZeroLayerDecoderCostsNothing) {
  CostScenario sc = toy(FusionMode::Shortcut, 1);
  sc.llm_layers = 0;
  const CostReport r = analytic_flops(sc);
  EXPECT_EQ(r.decoder_attention_macs + r.decoder_mlp_macs + r.head_macs, 0u);
}

TEST(FlopsModelTest, DoublingTextMatchesClosedFormScoreTerm) {
  CostScenario sc = toy(FusionMode::Shortcut, 5);
  const std::uint64_t m = sc.visual_tokens();
  const std::uint64_t before = decoder_score_macs(sc);
  sc.text_length *= 2;
  const std::uint64_t after = decoder_score_macs(sc);
  const std::uint64_t c1 = m + 6, c2 = m + 12;
  EXPECT_EQ(before, sc.llm_layers * 2 * c1 * c1 * sc.llm_width);
  EXPECT_EQ(after, sc.llm_layers * 2 * c2 * c2 * sc.llm_width);
  // score MACs are the C^2 part of the attention total
  const CostReport r = analytic_flops(sc);
  EXPECT_EQ(r.decoder_attention_macs - after, sc.llm_layers * 4 * c2 * sc.llm_width * sc.llm_width);
}

TEST(MeasuredVsAnalyticTest, ToyScenarioMatrix) {
  for (auto mode : {FusionMode::Shortcut, FusionMode::Concat}) {
    for (std::size_t n : {1u, 5u}) {
      const Discrepancy d = measured_vs_analytic(toy(mode, n), 3);
      EXPECT_TRUE(d.matches()) << d.describe();
      EXPECT_EQ(d.components.size(), 5u);
    }
  }
}

TEST(MeasuredVsAnalyticTest, SmallestDocumentedScenario) {
  // D = 8, C = 16, two layers
  CostScenario sc = toy(FusionMode::Shortcut, 1);
  sc.base_resolution = 4;
  sc.text_length = 12;
  EXPECT_EQ(sc.context_length(), 16u);
  EXPECT_TRUE(measured_vs_analytic(sc).matches());
}

TEST(MeasuredVsAnalyticTest, DescribeListsDeltas) {
  Discrepancy d;
  d.components.push_back({"adapter", 10, 12});
  EXPECT_FALSE(d.matches());
  EXPECT_NE(d.describe().find("delta=2"), std::string::npos);
}

TEST(MeasuredVsAnalyticTest, PatchCountMustBeTiled) {
  EXPECT_THROW(scenario_model_config(toy(FusionMode::Shortcut, 3)), ConfigError);
  EXPECT_EQ(scenario_model_config(toy(FusionMode::Shortcut, 10)).patching.tiles, 3u);
}

TEST(ScenarioTest, ApplyKeys) {
  std::istringstream in("mode = concat\nhigh_res = true\nvocab = 0\nshortcuts = 4\n");
  CostScenario sc;
  sc.apply(KeyValueConfig::parse(in));
  EXPECT_EQ(sc.mode, FusionMode::Concat);
  EXPECT_EQ(sc.patches, 5u);
  EXPECT_EQ(sc.shortcuts, 4u);
  std::istringstream bad("depth = 3\n");
  EXPECT_THROW(sc.apply(KeyValueConfig::parse(bad)), ConfigError);
}

TEST(BenchTest, RowsAndCsv) {
  const auto rows = attention_scaling_bench({16}, 8, 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].context, 16u);
  EXPECT_GT(rows[0].median_seconds, 0.0);
  std::ostringstream out;
  write_bench_csv(out, rows);
  EXPECT_EQ(out.str().rfind("kernel,context,patches,median_seconds\nattention,16,1,", 0), 0u);
  EXPECT_THROW(attention_scaling_bench({16}, 8, 0), UsageError);
}

TEST(BenchTest, CostCsvHasTotal) {
  std::ostringstream out;
  write_cost_csv(out, analytic_flops(toy(FusionMode::Shortcut, 1)));
  EXPECT_NE(out.str().find("\ntotal,"), std::string::npos);
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sparsecut/config.hpp"
#include "sparsecut/model.hpp"

namespace sparsecut {

// Inputs of the closed-form cost model. Costs are counted in multiply-
// accumulates of the matmuls the forward actually performs; FLOPs = 2 * MACs.
// Softmax, norms, activations, bias adds and residual adds are not counted.
struct CostScenario {
  FusionMode mode = FusionMode::Shortcut;
  std::size_t patches = 1;  // N
  std::size_t base_resolution = 336;
  std::size_t patch_size = 14;
  std::size_t channels = 3;
  std::size_t text_length = 64;  // M_t

  std::size_t vit_layers = 24;
  std::size_t vit_width = 1024;
  std::size_t vit_heads = 16;
  double vit_mlp_ratio = 4.0;

  std::size_t llm_layers = 32;
  std::size_t llm_width = 4096;
  std::size_t llm_heads = 32;
  double llm_mlp_ratio = 4.0;
  std::size_t vocab = 0;  // 0 leaves the output head out of the ledger

  std::size_t shortcuts = 8;  // |S|, shortcut mode
  std::size_t adapter_hidden = 0;  // 0 means 4 * vit_width
  std::size_t adapter_heads = 1;

  [[nodiscard]] std::size_t visual_tokens() const;  // M_v
  [[nodiscard]] std::size_t context_length() const;
  [[nodiscard]] std::size_t adapter_hidden_width() const {
    return adapter_hidden ? adapter_hidden : 4 * vit_width;
  }

  // LLaVA-1.5 geometry: CLIP ViT-L/14 at 336 px, a 32-layer 4096-wide decoder,
  // 64 text tokens, eight shortcuts; N = 5 when `high_res`.
  static CostScenario llava15(FusionMode mode, bool high_res);

  void apply(const KeyValueConfig& kv);
};

struct CostReport {
  std::uint64_t encoder_macs = 0;  // patch embedding + encoder layers
  std::uint64_t adapter_macs = 0;  // adapters (shortcut) or projector (concat)
  std::uint64_t decoder_attention_macs = 0;
  std::uint64_t decoder_mlp_macs = 0;
  std::uint64_t head_macs = 0;
  std::size_t context_length = 0;

  [[nodiscard]] std::uint64_t total_macs() const {
    return encoder_macs + adapter_macs + decoder_attention_macs + decoder_mlp_macs + head_macs;
  }
  [[nodiscard]] double flops(std::uint64_t macs) const { return 2.0 * static_cast<double>(macs); }
  [[nodiscard]] double total_flops() const { return flops(total_macs()); }
};

CostReport analytic_flops(const CostScenario& sc);

// Attention-score MACs (q k^T plus probs v) over all decoder layers.
std::uint64_t decoder_score_macs(const CostScenario& sc);

struct ComponentDelta {
  std::string component;
  std::uint64_t analytic = 0;
  std::uint64_t measured = 0;
  [[nodiscard]] bool matches() const { return analytic == measured; }
};

struct Discrepancy {
  std::vector<ComponentDelta> components;
  [[nodiscard]] bool matches() const;
  [[nodiscard]] std::string describe() const;
};

// Builds a model with the scenario's geometry (pattern: sparse uniform U-shape
// with `shortcuts` connections), runs it with per-component counters and
// compares against analytic_flops.
Discrepancy measured_vs_analytic(const CostScenario& sc, std::uint64_t seed = 0);

// Model configuration realizing a scenario.
ModelConfig scenario_model_config(const CostScenario& sc);

struct BenchRow {
  std::string kernel;
  std::size_t context = 0;
  std::size_t patches = 0;
  double median_seconds = 0.0;
};

// Median wall time of single-head attention (q, k, v all context x width).
std::vector<BenchRow> attention_scaling_bench(const std::vector<std::size_t>& contexts,
                                              std::size_t width, std::size_t repetitions,
                                              std::uint64_t seed = 0);

// Median wall time of decode_forward in shortcut mode for each patch count,
// using the fused tokens the model produces for that many patches.
std::vector<BenchRow> decoder_patch_bench(const RunConfig& base,
                                          const std::vector<std::size_t>& tiles_per_side,
                                          std::size_t repetitions);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);
void write_cost_csv(std::ostream& out, const CostReport& report);

}  // namespace sparsecut

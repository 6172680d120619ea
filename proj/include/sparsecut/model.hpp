#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "sparsecut/adapter.hpp"
#include "sparsecut/archive.hpp"
#include "sparsecut/llm_decoder.hpp"
#include "sparsecut/patching.hpp"
#include "sparsecut/shortcut_pattern.hpp"
#include "sparsecut/vision_encoder.hpp"

namespace sparsecut {

enum class FusionMode {
  Shortcut,  // one adapter per connection, fused length M_v
  Concat,    // all N*M_v final-layer tokens projected and fed to layer 1
};

struct PatchingConfig {
  std::size_t base_resolution = 28;
  std::size_t patch_size = 7;
  std::size_t channels = 3;
  std::size_t tiles = 2;
  bool high_res = true;

  [[nodiscard]] std::size_t tokens() const { return tokens_per_patch(base_resolution, patch_size); }
  [[nodiscard]] std::size_t patches() const { return high_res ? 1 + tiles * tiles : 1; }
};

struct ModelConfig {
  PatchingConfig patching;
  VitConfig vit;
  LlmConfig llm;
  AdapterConfig adapter;  // widths are taken from vit/llm
  ShortcutSet shortcuts;
  FusionMode mode = FusionMode::Shortcut;

  // Checks divisibility, pattern depths and positional-table coverage for a
  // text length of `text_length`.
  void validate(std::size_t text_length) const;
  // Set of connections the decoder actually sees (the conventional one in
  // concat mode).
  [[nodiscard]] ShortcutSet effective_shortcuts() const;
};

struct ModelWeights {
  EmbedderWeights embedder;
  VitWeights vit;
  std::map<std::size_t, AdapterBlock> adapters;  // keyed by decoder layer
  Projector projector;                           // concat mode only
  LlmWeights llm;

  // Each part draws from its own split stream; an adapter's stream depends
  // only on its (encoder layer, decoder layer) pair, so the connection shared
  // by two patterns gets the same weights in both.
  static ModelWeights random(const ModelConfig& cfg, std::uint64_t seed);

  // Makes every adapter except the one on the shallowest decoder layer emit
  // exactly zero.
  void zero_secondary_adapters();

  [[nodiscard]] TensorArchive to_archive() const;
};

struct ModelCounters {
  MacCounter* embed = nullptr;
  MacCounter* encoder = nullptr;
  MacCounter* adapter = nullptr;
  MacCounter* decoder_attention = nullptr;
  MacCounter* decoder_mlp = nullptr;
  MacCounter* head = nullptr;
};

struct ForwardResult {
  Tensor x0;  // N x M_v x D_v
  VitActivations vit;
  std::map<std::size_t, FusedVisualTokens> fused;
  DecoderTrace decoder;
};

ForwardResult run_model(const PatchBundle& bundle, std::span<const std::size_t> text_ids,
                        const ModelWeights& weights, const ModelConfig& cfg,
                        ModelCounters counters = {});

// Same pipeline from an already embedded N x M_v x D_v input.
ForwardResult run_model_embedded(const Tensor& x0, std::span<const std::size_t> text_ids,
                                 const ModelWeights& weights, const ModelConfig& cfg,
                                 ModelCounters counters = {});

// Seeded synthetic token ids in [0, vocab).
std::vector<std::size_t> synthetic_text(std::size_t length, std::size_t vocab, std::uint64_t seed);

struct DumpSelection {
  bool all_layers = true;
  std::vector<std::size_t> decoder_layers;  // 1-based; used when !all_layers
  bool encoder_states = true;
};

// Activation dump: x0, encoder states, fused tokens per connection, decoder
// traces for the selected layers and the logits.
TensorArchive activation_archive(const ForwardResult& result, const DumpSelection& selection = {});

}  // namespace sparsecut

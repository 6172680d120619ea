#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "sparsecut/adapter.hpp"
#include "sparsecut/shortcut_pattern.hpp"
#include "sparsecut/tensor.hpp"
#include "sparsecut/transformer.hpp"

namespace sparsecut {

struct LlmConfig {
  std::size_t layers = 32;
  std::size_t width = 4096;
  std::size_t heads = 32;
  double mlp_ratio = 4.0;
  std::size_t vocab = 32000;
  std::size_t max_context = 4096;  // rows of the learned positional table

  void validate() const;
  [[nodiscard]] std::size_t hidden() const { return mlp_hidden_width(width, mlp_ratio); }
};

struct LlmWeights {
  Tensor embedding;   // vocab x D_t
  Tensor positional;  // max_context x D_t, added once at entry
  std::vector<TransformerBlockWeights> layers;
  Tensor final_gain, final_bias;
  Tensor head, head_bias;  // D_t x vocab, vocab

  static LlmWeights random(const LlmConfig& cfg, SeededRng& rng);
};

// Visual tokens strictly precede textual tokens.
struct JointSequence {
  Tensor visual;   // M_vis x D_t
  Tensor textual;  // M_t x D_t

  [[nodiscard]] std::size_t boundary() const { return visual.rows(); }
  [[nodiscard]] std::size_t length() const { return visual.rows() + textual.rows(); }
  [[nodiscard]] Tensor joined() const { return concat_rows(visual, textual); }
};

struct DecoderLayerTrace {
  Tensor visual_in;   // Z'_j, after injection
  Tensor visual_out;  // Z''_j
  Tensor text_out;    // T_j
};

struct DecoderTrace {
  std::vector<DecoderLayerTrace> layers;
  Tensor final_hidden;  // joint output of the last layer, before the final norm
  Tensor logits;        // (M_vis + M_t) x vocab
  std::size_t visual_length = 0;

  [[nodiscard]] std::size_t context_length() const { return final_hidden.rows(); }
};

struct DecoderCounters {
  MacCounter* attention = nullptr;
  MacCounter* mlp = nullptr;
  MacCounter* head = nullptr;
};

// T_0: rows of `table` selected by `ids`.
Tensor embed_text(std::span<const std::size_t> ids, const Tensor& table);

// z_prev when no shortcut lands on this layer, z_prev + z_shortcut otherwise.
Tensor inject(const Tensor& z_prev, const std::optional<Tensor>& z_shortcut);

// Runs the causal decoder stack. `fused` must hold exactly one entry per
// decoder layer that `shortcuts` connects, all with the same row count. The
// visual slice starts as zeros and receives each layer's fused tokens by
// injection, so layers below the first connection see zero visual tokens.
DecoderTrace decode_forward(const std::map<std::size_t, FusedVisualTokens>& fused,
                            const ShortcutSet& shortcuts, const Tensor& t0,
                            const LlmWeights& weights, const LlmConfig& cfg,
                            DecoderCounters counters = {});

// Final norm and output head applied to the trace's last hidden state.
Tensor logits(const DecoderTrace& trace, const LlmWeights& weights, MacCounter* counter = nullptr);

}  // namespace sparsecut

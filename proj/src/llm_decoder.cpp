#include "sparsecut/llm_decoder.hpp"

#include <cmath>

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

void LlmConfig::validate() const {
  if (layers == 0) throw ConfigError("decoder needs at least one layer");
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("decoder width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (vocab == 0) throw ConfigError("decoder vocabulary must be non-empty");
}

LlmWeights LlmWeights::random(const LlmConfig& cfg, SeededRng& rng) {
  cfg.validate();
  LlmWeights w;
  SeededRng embed_rng = rng.split(0);
  SeededRng pos_rng = rng.split(1);
  SeededRng head_rng = rng.split(2);
  w.embedding = Tensor::randn({cfg.vocab, cfg.width}, embed_rng, 0.02);
  w.positional = Tensor::randn({cfg.max_context, cfg.width}, pos_rng, 0.02);
  w.layers.reserve(cfg.layers);
  for (std::size_t j = 0; j < cfg.layers; ++j) {
    SeededRng layer_rng = rng.split(100 + j);
    w.layers.push_back(TransformerBlockWeights::random(cfg.width, cfg.hidden(), layer_rng));
  }
  w.final_gain = Tensor::filled({cfg.width}, 1.0);
  w.final_bias = Tensor::zeros({cfg.width});
  w.head = Tensor::randn({cfg.width, cfg.vocab}, head_rng,
                         1.0 / std::sqrt(static_cast<double>(cfg.width)));
  w.head_bias = Tensor::zeros({cfg.vocab});
  return w;
}

Tensor embed_text(std::span<const std::size_t> ids, const Tensor& table) {
  if (table.rank() != 2) throw DimensionError("embed_text: table must be a matrix");
  Tensor out({ids.size(), table.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= table.rows()) {
      throw UsageError("token id " + std::to_string(ids[r]) + " outside vocabulary of " +
                       std::to_string(table.rows()));
    }
    const auto src = table.row(ids[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Tensor inject(const Tensor& z_prev, const std::optional<Tensor>& z_shortcut) {
  if (!z_shortcut) return z_prev;
  if (z_shortcut->shape() != z_prev.shape()) {
    throw UsageError("inject: shortcut tokens " + shape_to_string(z_shortcut->shape()) +
                     " do not match visual slice " + shape_to_string(z_prev.shape()));
  }
  return add(z_prev, *z_shortcut);
}

DecoderTrace decode_forward(const std::map<std::size_t, FusedVisualTokens>& fused,
                            const ShortcutSet& shortcuts, const Tensor& t0,
                            const LlmWeights& weights, const LlmConfig& cfg,
                            DecoderCounters counters) {
  cfg.validate();
  if (shortcuts.llm_layers() != cfg.layers) {
    throw ConfigError("pattern spans " + std::to_string(shortcuts.llm_layers()) +
                      " decoder layers, decoder has " + std::to_string(cfg.layers));
  }
  if (weights.layers.size() != cfg.layers) throw ConfigError("decoder weight count mismatch");
  for (const Connection& c : shortcuts.connections()) {
    if (!fused.contains(c.llm)) {
      throw ConfigError("no fused tokens for connected decoder layer " + std::to_string(c.llm));
    }
  }
  std::size_t visual_rows = 0;
  bool first = true;
  for (const auto& [layer, tokens] : fused) {
    if (!shortcuts.source_for(layer)) {
      throw ConfigError("fused tokens supplied for unconnected decoder layer " +
                        std::to_string(layer));
    }
    if (tokens.z.rank() != 2 || tokens.z.cols() != cfg.width) {
      throw ConfigError("fused tokens for layer " + std::to_string(layer) + " have shape " +
                        shape_to_string(tokens.z.shape()));
    }
    if (!first && tokens.z.rows() != visual_rows) {
      throw ConfigError("fused token counts differ across shortcut layers");
    }
    visual_rows = tokens.z.rows();
    first = false;
  }
  if (t0.rank() != 2 || t0.cols() != cfg.width) {
    throw DimensionError("decode_forward: text embeddings " + shape_to_string(t0.shape()));
  }
  const std::size_t context = visual_rows + t0.rows();
  if (context > cfg.max_context) {
    throw ConfigError("joint context " + std::to_string(context) + " exceeds positional table " +
                      std::to_string(cfg.max_context));
  }

  JointSequence seq{Tensor({visual_rows, cfg.width}), t0};
  Tensor hidden = add(seq.joined(), slice_rows(weights.positional, 0, context));

  DecoderTrace trace;
  trace.visual_length = visual_rows;
  trace.layers.reserve(cfg.layers);
  for (std::size_t j = 1; j <= cfg.layers; ++j) {
    std::optional<Tensor> shortcut;
    if (auto it = fused.find(j); it != fused.end()) shortcut = it->second.z;
    DecoderLayerTrace layer;
    layer.visual_in = inject(slice_rows(hidden, 0, visual_rows), shortcut);
    for (std::size_t r = 0; r < visual_rows; ++r) {
      const auto src = layer.visual_in.row(r);
      std::copy(src.begin(), src.end(), hidden.row(r).begin());
    }
    hidden = transformer_block(hidden, weights.layers[j - 1], cfg.heads, true,
                               {counters.attention, counters.mlp});
    layer.visual_out = slice_rows(hidden, 0, visual_rows);
    layer.text_out = slice_rows(hidden, visual_rows, t0.rows());
    trace.layers.push_back(std::move(layer));
  }
  trace.final_hidden = std::move(hidden);
  trace.logits = logits(trace, weights, counters.head);
  return trace;
}

Tensor logits(const DecoderTrace& trace, const LlmWeights& weights, MacCounter* counter) {
  if (trace.final_hidden.rank() != 2) throw UsageError("logits: trace is incomplete");
  if (trace.final_hidden.rows() == 0) return Tensor({0, weights.head.cols()});
  const Tensor normed = layer_norm(trace.final_hidden, weights.final_gain, weights.final_bias);
  return add_row_vector(matmul(normed, weights.head, counter), weights.head_bias);
}

}  // namespace sparsecut

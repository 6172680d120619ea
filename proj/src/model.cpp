#include "sparsecut/model.hpp"

#include <algorithm>

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

namespace {

constexpr std::uint64_t kEmbedderStream = 1;
constexpr std::uint64_t kEncoderStream = 2;
constexpr std::uint64_t kDecoderStream = 3;
constexpr std::uint64_t kProjectorStream = 4;
constexpr std::uint64_t kAdapterStreamBase = 0x1000;

AdapterConfig adapter_config(const ModelConfig& cfg) {
  AdapterConfig a = cfg.adapter;
  a.vit_width = cfg.vit.width;
  a.llm_width = cfg.llm.width;
  return a;
}

}  // namespace

void ModelConfig::validate(std::size_t text_length) const {
  vit.validate();
  llm.validate();
  adapter_config(*this).validate();
  if (patching.channels != 1 && patching.channels != 3) {
    throw ConfigError("channels must be 1 or 3");
  }
  if (patching.high_res && patching.tiles < 2) throw ConfigError("high-res mode needs tiles >= 2");
  if (patching.patch_size == 0 || patching.base_resolution % patching.patch_size != 0) {
    throw ConfigError("base resolution " + std::to_string(patching.base_resolution) +
                      " not divisible by patch size " + std::to_string(patching.patch_size));
  }
  if (shortcuts.vit_layers() != vit.layers || shortcuts.llm_layers() != llm.layers) {
    throw ConfigError("pattern depths (" + std::to_string(shortcuts.vit_layers()) + ", " +
                      std::to_string(shortcuts.llm_layers()) + ") do not match model depths (" +
                      std::to_string(vit.layers) + ", " + std::to_string(llm.layers) + ")");
  }
  const std::size_t visual =
      mode == FusionMode::Concat ? patching.patches() * patching.tokens() : patching.tokens();
  if (visual + text_length > llm.max_context) {
    throw ConfigError("joint context " + std::to_string(visual + text_length) +
                      " exceeds max_context " + std::to_string(llm.max_context));
  }
}

ShortcutSet ModelConfig::effective_shortcuts() const {
  if (mode == FusionMode::Concat) return ShortcutSet::conventional(vit.layers, llm.layers);
  return shortcuts;
}

ModelWeights ModelWeights::random(const ModelConfig& cfg, std::uint64_t seed) {
  const SeededRng root(seed);
  ModelWeights w;
  SeededRng embed_rng = root.split(kEmbedderStream);
  w.embedder = EmbedderWeights::random(cfg.patching.base_resolution, cfg.patching.patch_size,
                                       cfg.patching.channels, cfg.vit.width, embed_rng);
  SeededRng vit_rng = root.split(kEncoderStream);
  w.vit = VitWeights::random(cfg.vit, vit_rng);
  SeededRng llm_rng = root.split(kDecoderStream);
  w.llm = LlmWeights::random(cfg.llm, llm_rng);
  const AdapterConfig acfg = adapter_config(cfg);
  if (cfg.mode == FusionMode::Concat) {
    SeededRng proj_rng = root.split(kProjectorStream);
    w.projector = Projector::random(acfg.vit_width, acfg.mlp_hidden(), acfg.llm_width, proj_rng);
  } else {
    for (const Connection& c : cfg.shortcuts.connections()) {
      SeededRng rng = root.split(kAdapterStreamBase + c.vit * 0x10000 + c.llm);
      w.adapters.emplace(c.llm, AdapterBlock::random(acfg, rng));
    }
  }
  return w;
}

void ModelWeights::zero_secondary_adapters() {
  if (adapters.empty()) return;
  const std::size_t first = adapters.begin()->first;
  for (auto& [layer, block] : adapters) {
    if (layer == first) continue;
    block.mlp.w_out = Tensor::zeros(block.mlp.w_out.shape());
    block.mlp.b_out = Tensor::zeros(block.mlp.b_out.shape());
  }
}

TensorArchive ModelWeights::to_archive() const {
  TensorArchive a;
  a.add("embed.projection", embedder.projection);
  a.add("embed.positional", embedder.positional);
  const auto add_block = [&a](const std::string& prefix, const TransformerBlockWeights& b) {
    a.add(prefix + ".ln1_gain", b.ln1_gain);
    a.add(prefix + ".ln1_bias", b.ln1_bias);
    a.add(prefix + ".wq", b.wq);
    a.add(prefix + ".wk", b.wk);
    a.add(prefix + ".wv", b.wv);
    a.add(prefix + ".wo", b.wo);
    a.add(prefix + ".ln2_gain", b.ln2_gain);
    a.add(prefix + ".ln2_bias", b.ln2_bias);
    a.add(prefix + ".mlp_in", b.mlp_in);
    a.add(prefix + ".mlp_in_bias", b.mlp_in_bias);
    a.add(prefix + ".mlp_out", b.mlp_out);
    a.add(prefix + ".mlp_out_bias", b.mlp_out_bias);
  };
  for (std::size_t i = 0; i < vit.layers.size(); ++i) {
    add_block("vit." + std::to_string(i + 1), vit.layers[i]);
  }
  for (const auto& [layer, block] : adapters) {
    for (const auto& [name, t] : block.parameters()) {
      a.add("adapter." + std::to_string(layer) + "." + name, *t);
    }
  }
  if (!projector.w_in.empty()) {
    a.add("projector.mlp_in", projector.w_in);
    a.add("projector.mlp_in_bias", projector.b_in);
    a.add("projector.mlp_out", projector.w_out);
    a.add("projector.mlp_out_bias", projector.b_out);
  }
  a.add("llm.embedding", llm.embedding);
  a.add("llm.positional", llm.positional);
  for (std::size_t j = 0; j < llm.layers.size(); ++j) {
    add_block("llm." + std::to_string(j + 1), llm.layers[j]);
  }
  a.add("llm.final_gain", llm.final_gain);
  a.add("llm.final_bias", llm.final_bias);
  a.add("llm.head", llm.head);
  a.add("llm.head_bias", llm.head_bias);
  return a;
}

ForwardResult run_model(const PatchBundle& bundle, std::span<const std::size_t> text_ids,
                        const ModelWeights& weights, const ModelConfig& cfg,
                        ModelCounters counters) {
  if (bundle.count() != cfg.patching.patches()) {
    throw ConfigError("bundle has " + std::to_string(bundle.count()) + " patches, config expects " +
                      std::to_string(cfg.patching.patches()));
  }
  return run_model_embedded(embed_bundle(bundle, weights.embedder, counters.embed), text_ids,
                            weights, cfg, counters);
}

ForwardResult run_model_embedded(const Tensor& x0, std::span<const std::size_t> text_ids,
                                 const ModelWeights& weights, const ModelConfig& cfg,
                                 ModelCounters counters) {
  cfg.validate(text_ids.size());
  ForwardResult result;
  result.x0 = x0;
  result.vit = vit_forward(x0, weights.vit, cfg.vit, counters.encoder);

  const ShortcutSet shortcuts = cfg.effective_shortcuts();
  if (cfg.mode == FusionMode::Concat) {
    const Tensor& top = result.vit.states.back();
    const Tensor all_tokens = flatten_slices(top, 0, top.dim(0));
    result.fused.emplace(1, FusedVisualTokens{project_tokens(all_tokens, weights.projector,
                                                             counters.adapter),
                                              cfg.vit.layers});
  } else {
    for (const Connection& c : shortcuts.connections()) {
      const auto it = weights.adapters.find(c.llm);
      if (it == weights.adapters.end()) {
        throw ConfigError("no adapter weights for decoder layer " + std::to_string(c.llm));
      }
      std::optional<Tensor> high;
      if (x0.dim(0) > 1) high = result.vit.high_res(c.vit);
      result.fused.emplace(c.llm, fuse(result.vit.low_res(c.vit), high, it->second, c.vit,
                                       counters.adapter));
    }
  }

  const Tensor t0 = embed_text(text_ids, weights.llm.embedding);
  result.decoder = decode_forward(result.fused, shortcuts, t0, weights.llm, cfg.llm,
                                  {counters.decoder_attention, counters.decoder_mlp, counters.head});
  return result;
}

std::vector<std::size_t> synthetic_text(std::size_t length, std::size_t vocab,
                                        std::uint64_t seed) {
  if (vocab == 0) throw UsageError("synthetic_text: empty vocabulary");
  SeededRng rng = SeededRng(seed).split(0x7e47);
  std::vector<std::size_t> ids(length);
  for (std::size_t& id : ids) id = static_cast<std::size_t>(rng.next_u64() % vocab);
  return ids;
}

TensorArchive activation_archive(const ForwardResult& result, const DumpSelection& selection) {
  TensorArchive a;
  a.add("x0", result.x0);
  if (selection.encoder_states) {
    for (std::size_t i = 1; i < result.vit.states.size(); ++i) {
      a.add("vit.state." + std::to_string(i), result.vit.states[i]);
    }
  }
  for (const auto& [layer, tokens] : result.fused) {
    a.add("fused." + std::to_string(layer) + ".from." + std::to_string(tokens.source_vit_layer),
          tokens.z);
  }
  for (std::size_t j = 1; j <= result.decoder.layers.size(); ++j) {
    if (!selection.all_layers &&
        std::find(selection.decoder_layers.begin(), selection.decoder_layers.end(), j) ==
            selection.decoder_layers.end()) {
      continue;
    }
    const DecoderLayerTrace& t = result.decoder.layers[j - 1];
    const std::string prefix = "llm." + std::to_string(j);
    a.add(prefix + ".visual_in", t.visual_in);
    a.add(prefix + ".visual_out", t.visual_out);
    a.add(prefix + ".text_out", t.text_out);
  }
  a.add("logits", result.decoder.logits);
  return a;
}

}  // namespace sparsecut

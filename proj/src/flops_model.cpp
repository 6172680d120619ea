#include "sparsecut/flops_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

namespace {

using u64 = std::uint64_t;

std::size_t integer_sqrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

// MACs of one pre-norm transformer block over `tokens` rows.
u64 block_attention_macs(u64 tokens, u64 width) {
  return 4 * tokens * width * width + 2 * tokens * tokens * width;
}

u64 block_mlp_macs(u64 tokens, u64 width, u64 hidden) { return 2 * tokens * width * hidden; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::size_t CostScenario::visual_tokens() const {
  if (base_resolution == 0) return 0;
  return tokens_per_patch(base_resolution, patch_size);
}

std::size_t CostScenario::context_length() const {
  const std::size_t m = visual_tokens();
  return (mode == FusionMode::Concat ? patches * m : m) + text_length;
}

CostScenario CostScenario::llava15(FusionMode mode, bool high_res) {
  CostScenario sc;
  sc.mode = mode;
  sc.patches = high_res ? 5 : 1;
  return sc;
}

void CostScenario::apply(const KeyValueConfig& kv) {
  static const char* const kKnown[] = {
      "mode",       "patches",       "tiles",         "high_res",       "base_resolution",
      "patch_size", "channels",      "text_length",   "vit_layers",     "vit_width",
      "vit_heads",  "vit_mlp_ratio", "llm_layers",    "llm_width",      "llm_heads",
      "llm_mlp_ratio", "vocab",      "shortcuts",     "pattern_count",  "adapter_hidden",
      "adapter_heads", "seed"};
  for (const auto& [key, value] : kv.values()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw ConfigError("unknown scenario key '" + key + "'");
    }
  }
  const auto set_size = [&](const char* key, std::size_t& dst) {
    if (auto v = kv.get_uint(key)) dst = static_cast<std::size_t>(*v);
  };
  if (auto v = kv.get_string("mode")) {
    const auto m = parse_fusion_mode(*v);
    if (!m) throw ConfigError("mode must be shortcut or concat");
    mode = *m;
  }
  // tiles/high_res follow the run-config spelling; `patches` sets N directly.
  std::size_t tiles = 0;
  set_size("tiles", tiles);
  if (auto hr = kv.get_bool("high_res")) patches = *hr ? 1 + std::max<std::size_t>(tiles, 2) *
                                                             std::max<std::size_t>(tiles, 2)
                                                       : 1;
  set_size("patches", patches);
  set_size("base_resolution", base_resolution);
  set_size("patch_size", patch_size);
  set_size("channels", channels);
  set_size("text_length", text_length);
  set_size("vit_layers", vit_layers);
  set_size("vit_width", vit_width);
  set_size("vit_heads", vit_heads);
  if (auto v = kv.get_double("vit_mlp_ratio")) vit_mlp_ratio = *v;
  set_size("llm_layers", llm_layers);
  set_size("llm_width", llm_width);
  set_size("llm_heads", llm_heads);
  if (auto v = kv.get_double("llm_mlp_ratio")) llm_mlp_ratio = *v;
  set_size("vocab", vocab);
  set_size("pattern_count", shortcuts);
  set_size("shortcuts", shortcuts);
  set_size("adapter_hidden", adapter_hidden);
  set_size("adapter_heads", adapter_heads);
  if (patches == 0) throw ConfigError("scenario needs at least one patch");
}

CostReport analytic_flops(const CostScenario& sc) {
  const u64 n = sc.patches;
  const u64 m = sc.visual_tokens();
  const u64 dv = sc.vit_width;
  const u64 dt = sc.llm_width;
  const u64 fan_in = static_cast<u64>(sc.patch_size) * sc.patch_size * sc.channels;
  const u64 vit_hidden = mlp_hidden_width(sc.vit_width, sc.vit_mlp_ratio);
  const u64 llm_hidden = mlp_hidden_width(sc.llm_width, sc.llm_mlp_ratio);
  const u64 adapter_hidden = sc.adapter_hidden_width();

  CostReport r;
  r.context_length = sc.context_length();
  r.encoder_macs = n * m * fan_in * dv +
                   sc.vit_layers * n * (block_attention_macs(m, dv) + block_mlp_macs(m, dv, vit_hidden));

  const u64 mlp_per_token = dv * adapter_hidden + adapter_hidden * dt;
  if (sc.mode == FusionMode::Concat) {
    r.adapter_macs = n * m * mlp_per_token;
  } else {
    const u64 keys = n > 1 ? (n - 1) * m : m;
    const u64 per_adapter = 2 * m * dv * dv      // W_q, W_o
                            + 2 * keys * dv * dv  // W_k, W_v
                            + 2 * m * keys * dv   // scores, weighted values
                            + m * mlp_per_token;
    r.adapter_macs = sc.shortcuts * per_adapter;
  }

  const u64 c = r.context_length;
  r.decoder_attention_macs = sc.llm_layers * block_attention_macs(c, dt);
  r.decoder_mlp_macs = sc.llm_layers * block_mlp_macs(c, dt, llm_hidden);
  r.head_macs = sc.llm_layers > 0 ? c * dt * sc.vocab : 0;
  return r;
}

std::uint64_t decoder_score_macs(const CostScenario& sc) {
  const u64 c = sc.context_length();
  return sc.llm_layers * 2 * c * c * sc.llm_width;
}

bool Discrepancy::matches() const {
  return std::all_of(components.begin(), components.end(),
                     [](const ComponentDelta& d) { return d.matches(); });
}

std::string Discrepancy::describe() const {
  std::ostringstream out;
  for (const ComponentDelta& d : components) {
    out << std::left << std::setw(20) << d.component << " analytic=" << d.analytic
        << " measured=" << d.measured;
    if (!d.matches()) {
      out << " delta=" << (static_cast<long double>(d.measured) - static_cast<long double>(d.analytic));
    }
    out << '\n';
  }
  return out.str();
}

ModelConfig scenario_model_config(const CostScenario& sc) {
  ModelConfig cfg;
  cfg.patching.base_resolution = sc.base_resolution;
  cfg.patching.patch_size = sc.patch_size;
  cfg.patching.channels = sc.channels;
  if (sc.patches == 1) {
    cfg.patching.high_res = false;
    cfg.patching.tiles = 2;
  } else {
    const std::size_t tiles = integer_sqrt(sc.patches - 1);
    if (tiles < 2 || tiles * tiles + 1 != sc.patches) {
      throw ConfigError("patch count " + std::to_string(sc.patches) +
                        " is not 1 + tiles^2 with tiles >= 2");
    }
    cfg.patching.high_res = true;
    cfg.patching.tiles = tiles;
  }
  cfg.vit = VitConfig{sc.vit_layers, sc.vit_width, sc.vit_heads, sc.vit_mlp_ratio};
  cfg.llm = LlmConfig{sc.llm_layers, sc.llm_width, sc.llm_heads, sc.llm_mlp_ratio,
                      std::max<std::size_t>(sc.vocab, 1), sc.context_length()};
  cfg.adapter = AdapterConfig{sc.vit_width, sc.llm_width, sc.adapter_heads, sc.adapter_hidden, true};
  cfg.mode = sc.mode;
  if (sc.mode == FusionMode::Shortcut) {
    PatternSpec spec;
    spec.count = sc.shortcuts;
    spec.dense = false;
    cfg.shortcuts = generate(spec, sc.vit_layers, sc.llm_layers);
  } else {
    cfg.shortcuts = ShortcutSet::conventional(sc.vit_layers, sc.llm_layers);
  }
  return cfg;
}

Discrepancy measured_vs_analytic(const CostScenario& sc, std::uint64_t seed) {
  const ModelConfig cfg = scenario_model_config(sc);
  const ModelWeights weights = ModelWeights::random(cfg, seed);
  SeededRng rng(seed);
  const ImageTensor image = synthetic_image(sc.base_resolution, sc.channels, rng);
  const PatchBundle bundle = build_bundle(image, sc.base_resolution, cfg.patching.tiles,
                                          cfg.patching.high_res);
  const auto ids = synthetic_text(sc.text_length, cfg.llm.vocab, seed);

  MacCounter embed, encoder, adapter, attention, mlp, head;
  run_model(bundle, ids, weights, cfg, {&embed, &encoder, &adapter, &attention, &mlp, &head});

  const CostReport expected = analytic_flops(sc);
  Discrepancy d;
  d.components.push_back({"encoder", expected.encoder_macs, embed.count + encoder.count});
  d.components.push_back({"adapter", expected.adapter_macs, adapter.count});
  d.components.push_back({"decoder_attention", expected.decoder_attention_macs, attention.count});
  d.components.push_back({"decoder_mlp", expected.decoder_mlp_macs, mlp.count});
  if (sc.vocab > 0) d.components.push_back({"head", expected.head_macs, head.count});
  return d;
}

std::vector<BenchRow> attention_scaling_bench(const std::vector<std::size_t>& contexts,
                                              std::size_t width, std::size_t repetitions,
                                              std::uint64_t seed) {
  if (repetitions == 0) throw UsageError("bench needs at least one repetition");
  std::vector<BenchRow> rows;
  for (std::size_t c : contexts) {
    SeededRng rng = SeededRng(seed).split(c);
    const Tensor q = Tensor::randn({c, width}, rng);
    const Tensor k = Tensor::randn({c, width}, rng);
    const Tensor v = Tensor::randn({c, width}, rng);
    std::vector<double> times;
    times.reserve(repetitions);
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto start = std::chrono::steady_clock::now();
      const Tensor out = scaled_dot_attention(q, k, v, false);
      const auto stop = std::chrono::steady_clock::now();
      if (out.empty()) throw NumericError("attention produced no output");
      times.push_back(std::chrono::duration<double>(stop - start).count());
    }
    rows.push_back({"attention", c, 1, median(times)});
  }
  return rows;
}

std::vector<BenchRow> decoder_patch_bench(const RunConfig& base,
                                          const std::vector<std::size_t>& tiles_per_side,
                                          std::size_t repetitions) {
  if (repetitions == 0) throw UsageError("bench needs at least one repetition");
  struct Case {
    ModelConfig cfg;
    ModelWeights weights;
    std::map<std::size_t, FusedVisualTokens> fused;
    Tensor t0;
    std::vector<double> times;
  };
  std::vector<Case> cases;
  for (std::size_t tiles : tiles_per_side) {
    RunConfig rc = base;
    rc.mode = FusionMode::Shortcut;
    rc.patching.high_res = tiles >= 2;
    if (tiles >= 2) rc.patching.tiles = tiles;
    Case c{rc.model_config(), {}, {}, {}, {}};
    c.weights = ModelWeights::random(c.cfg, rc.seed);
    SeededRng rng(rc.seed);
    const ImageTensor image = synthetic_image(rc.patching.base_resolution, rc.patching.channels, rng);
    const auto ids = synthetic_text(rc.text_length, rc.llm.vocab, rc.seed);
    ForwardResult fr = run_model(build_bundle(image, rc.patching.base_resolution,
                                              rc.patching.tiles, rc.patching.high_res),
                                 ids, c.weights, c.cfg);
    c.fused = std::move(fr.fused);
    c.t0 = embed_text(ids, c.weights.llm.embedding);
    cases.push_back(std::move(c));
  }
  // Interleave cases so slow drift in machine load hits all of them alike.
  for (std::size_t r = 0; r < repetitions; ++r) {
    for (Case& c : cases) {
      const auto start = std::chrono::steady_clock::now();
      const DecoderTrace trace = decode_forward(c.fused, c.cfg.effective_shortcuts(), c.t0,
                                                c.weights.llm, c.cfg.llm);
      const auto stop = std::chrono::steady_clock::now();
      if (trace.layers.empty()) throw NumericError("decoder produced no layers");
      c.times.push_back(std::chrono::duration<double>(stop - start).count());
    }
  }
  std::vector<BenchRow> rows;
  for (const Case& c : cases) {
    rows.push_back({"decoder", c.fused.empty() ? 0 : c.fused.begin()->second.z.rows() + c.t0.rows(),
                    c.cfg.patching.patches(), median(c.times)});
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "kernel,context,patches,median_seconds\n";
  out << std::setprecision(9);
  for (const BenchRow& r : rows) {
    out << r.kernel << ',' << r.context << ',' << r.patches << ',' << r.median_seconds << '\n';
  }
}

void write_cost_csv(std::ostream& out, const CostReport& report) {
  out << "component,macs,flops\n";
  const auto row = [&](const char* name, u64 macs) {
    out << name << ',' << macs << ',' << 2 * macs << '\n';
  };
  row("encoder", report.encoder_macs);
  row("adapter", report.adapter_macs);
  row("decoder_attention", report.decoder_attention_macs);
  row("decoder_mlp", report.decoder_mlp_macs);
  row("head", report.head_macs);
  row("total", report.total_macs());
}

}  // namespace sparsecut

// Command-line front end: pattern, forward, flops, bench, gradcheck.
//
// Exit codes: 0 success, 1 validation/config error, 2 threshold violation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparsecut/config.hpp"
#include "sparsecut/errors.hpp"
#include "sparsecut/flops_model.hpp"
#include "sparsecut/gradcheck.hpp"
#include "sparsecut/model.hpp"
#include "sparsecut/rng.hpp"
#include "sparsecut/shortcut_pattern.hpp"

namespace fs = std::filesystem;
using namespace sparsecut;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitThreshold = 2;

std::string format_set(const ShortcutSet& s) {
  std::ostringstream out;
  out << "S={";
  for (std::size_t n = 0; n < s.connections().size(); ++n) {
    if (n) out << ',';
    out << '(' << s.connections()[n].vit << ',' << s.connections()[n].llm << ')';
  }
  out << '}';
  return out.str();
}

std::string tera(double flops) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3) << flops / 1e12 << "T";
  return out.str();
}

// ---- pattern -------------------------------------------------------------

struct PatternArgs {
  std::string order = "ushape";
  std::string dist = "uniform";
  std::optional<std::size_t> sparse;
  bool dense = false;
  std::size_t lv = 24;
  std::size_t lt = 32;
  std::string named;
  std::string file;
  std::string write;
};

int cmd_pattern(const PatternArgs& a) {
  ShortcutSet s;
  if (!a.file.empty()) {
    s = read_pattern_file(a.file);
  } else {
    PatternSpec spec;
    if (!a.named.empty()) {
      if (a.named.size() != 1) throw UsageError("--named takes one letter a-f");
      spec = named_pattern(a.named[0]);
    } else {
      const auto order = parse_order(a.order);
      const auto dist = parse_distribution(a.dist);
      if (!order) throw UsageError("--order must be ushape or aligned");
      if (!dist) throw UsageError("--dist must be uniform, bottom or top");
      spec.order = *order;
      spec.distribution = *dist;
      spec.dense = a.dense;
      if (a.sparse) spec.count = *a.sparse;
    }
    s = generate(spec, a.lv, a.lt);
  }
  const PatternReport r = classify(s);
  std::cout << format_set(s) << '\n';
  std::cout << "connections=" << r.count << " L_v=" << s.vit_layers() << " L_t=" << s.llm_layers()
            << '\n';
  std::cout << "order=" << to_string(r.order) << " distribution=" << to_string(r.distribution)
            << " density=" << std::setprecision(4) << r.density << (r.dense ? " (dense)" : " (sparse)")
            << '\n';
  if (r.conventional) std::cout << "conventional: final encoder layer into first decoder layer\n";
  std::cout << '\n' << render_ascii(s);
  if (!a.write.empty()) write_pattern_file(a.write, s);
  return kExitOk;
}

// ---- forward -------------------------------------------------------------

struct ForwardArgs {
  std::string config;
  std::string image;
  bool synthetic = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sparse;
  std::string mode;
  std::optional<bool> high_res;
  std::optional<std::size_t> tiles;
  std::optional<std::size_t> text_length;
  bool zero_adapter = false;
  std::string out;
  std::vector<std::size_t> layers;
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (!path.empty()) rc.apply(KeyValueConfig::load(path));
  return rc;
}

int cmd_forward(const ForwardArgs& a) {
  RunConfig rc = load_run_config(a.config);
  rc.apply_environment();
  if (a.seed) rc.seed = *a.seed;
  if (a.sparse) {
    rc.pattern.dense = false;
    rc.pattern.count = *a.sparse;
    rc.pattern_file.reset();
  }
  if (!a.mode.empty()) {
    const auto m = parse_fusion_mode(a.mode);
    if (!m) throw ConfigError("--mode must be shortcut or concat");
    rc.mode = *m;
  }
  if (a.high_res) rc.patching.high_res = *a.high_res;
  if (a.tiles) rc.patching.tiles = *a.tiles;
  if (a.text_length) rc.text_length = *a.text_length;
  if (!a.out.empty()) rc.output_dir = a.out;

  const ModelConfig cfg = rc.model_config();
  ModelWeights weights = ModelWeights::random(cfg, rc.seed);
  if (a.zero_adapter) weights.zero_secondary_adapters();

  ImageTensor image;
  if (!a.image.empty() && !a.synthetic) {
    image = read_image(a.image);
    if (image.channels != rc.patching.channels) {
      throw ConfigError("image has " + std::to_string(image.channels) + " channels, config " +
                        std::to_string(rc.patching.channels));
    }
  } else {
    SeededRng rng = SeededRng(rc.seed).split(0x1a6e);
    image = synthetic_image(rc.patching.base_resolution, rc.patching.channels, rng);
  }
  const PatchBundle bundle = build_bundle(image, rc.patching.base_resolution, rc.patching.tiles,
                                          rc.patching.high_res);
  const auto ids = synthetic_text(rc.text_length, rc.llm.vocab, rc.seed);
  const ForwardResult result = run_model(bundle, ids, weights, cfg);

  DumpSelection selection;
  if (!a.layers.empty()) {
    selection.all_layers = false;
    selection.decoder_layers = a.layers;
  }
  fs::create_directories(rc.output_dir);
  const fs::path stem = rc.output_dir / "activations";
  activation_archive(result, selection).save(stem);
  {
    std::ofstream cfg_out(rc.output_dir / "run.cfg");
    rc.write(cfg_out);
  }

  const Tensor& logits = result.decoder.logits;
  double sum = 0.0, sum_sq = 0.0;
  for (double v : logits.data()) {
    sum += v;
    sum_sq += v * v;
  }
  const ShortcutSet effective = cfg.effective_shortcuts();
  std::cout << "mode=" << to_string(rc.mode) << " patches=" << bundle.count()
            << " effective_resolution=" << bundle.effective_resolution() << '\n';
  std::cout << "shortcuts " << format_set(effective) << '\n';
  std::cout << "visual_tokens=" << result.decoder.visual_length << " text_tokens=" << ids.size()
            << " context_length=" << result.decoder.context_length() << '\n';
  std::cout << std::setprecision(17) << "logits shape=" << shape_to_string(logits.shape())
            << " sum=" << sum << " sum_sq=" << sum_sq << '\n';
  std::cout << "dump " << TensorArchive::manifest_path(stem).string() << '\n';

  std::ofstream summary(rc.output_dir / "summary.csv");
  summary << "mode,patches,visual_tokens,text_tokens,context_length,logits_sum,logits_sum_sq\n"
          << std::setprecision(17) << to_string(rc.mode) << ',' << bundle.count() << ','
          << result.decoder.visual_length << ',' << ids.size() << ','
          << result.decoder.context_length() << ',' << sum << ',' << sum_sq << '\n';
  return kExitOk;
}

// ---- flops ---------------------------------------------------------------

struct FlopsArgs {
  std::string config;
  std::string preset;
  std::string mode;
  std::optional<std::size_t> patches;
  std::optional<std::size_t> text_length;
  bool verify = false;
  bool force = false;
  std::string csv;
};

constexpr std::uint64_t kVerifyMacLimit = 50'000'000'000ULL;

int cmd_flops(const FlopsArgs& a) {
  CostScenario sc;
  if (!a.preset.empty()) {
    if (a.preset == "llava15-low") {
      sc = CostScenario::llava15(FusionMode::Shortcut, false);
    } else if (a.preset == "llava15-high") {
      sc = CostScenario::llava15(FusionMode::Shortcut, true);
    } else {
      throw UsageError("unknown preset '" + a.preset + "' (llava15-low, llava15-high)");
    }
  }
  if (!a.config.empty()) sc.apply(KeyValueConfig::load(a.config));
  if (!a.mode.empty()) {
    const auto m = parse_fusion_mode(a.mode);
    if (!m) throw ConfigError("--mode must be shortcut or concat");
    sc.mode = *m;
  }
  if (a.patches) sc.patches = *a.patches;
  if (a.text_length) sc.text_length = *a.text_length;

  const CostReport r = analytic_flops(sc);
  std::cout << "mode=" << to_string(sc.mode) << " N=" << sc.patches << " M_v=" << sc.visual_tokens()
            << " M_t=" << sc.text_length << " context=" << r.context_length << '\n';
  std::cout << std::left << std::setw(20) << "component" << std::right << std::setw(22) << "MACs"
            << std::setw(14) << "FLOPs" << '\n';
  const auto row = [&](const char* name, std::uint64_t macs) {
    std::cout << std::left << std::setw(20) << name << std::right << std::setw(22) << macs
              << std::setw(14) << tera(2.0 * static_cast<double>(macs)) << '\n';
  };
  row("encoder", r.encoder_macs);
  row("adapter", r.adapter_macs);
  row("decoder_attention", r.decoder_attention_macs);
  row("decoder_mlp", r.decoder_mlp_macs);
  row("head", r.head_macs);
  row("total", r.total_macs());
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    write_cost_csv(out, r);
  }
  if (a.verify) {
    if (r.total_macs() > kVerifyMacLimit && !a.force) {
      throw UsageError("--verify would execute " + std::to_string(r.total_macs()) +
                       " MACs on the reference kernels; shrink the scenario or pass --force");
    }
    std::cout.flush();
    const Discrepancy d = measured_vs_analytic(sc);
    std::cout << "\nmeasured vs analytic MACs\n" << d.describe();
    if (!d.matches()) {
      std::cerr << "analytic model disagrees with the instrumented forward\n";
      return kExitThreshold;
    }
    std::cout << "verify: exact match\n";
  }
  return kExitOk;
}

// ---- bench ---------------------------------------------------------------

struct BenchArgs {
  std::vector<std::size_t> contexts{256, 512, 1024};
  std::size_t width = 64;
  std::size_t reps = 5;
  bool decoder = false;
  std::string config;
  std::string csv;
};

int cmd_bench(const BenchArgs& a) {
  std::vector<BenchRow> rows = attention_scaling_bench(a.contexts, a.width, a.reps);
  if (a.decoder) {
    const RunConfig rc = load_run_config(a.config);
    const auto more = decoder_patch_bench(rc, {0, rc.patching.tiles}, a.reps);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  write_bench_csv(std::cout, rows);
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    write_bench_csv(out, rows);
  }
  return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------

struct GradcheckArgs {
  std::size_t vit_width = 4;
  std::size_t llm_width = 6;
  std::size_t tokens = 4;
  std::size_t patches = 5;
  std::size_t heads = 1;
  std::size_t hidden = 0;
  std::uint64_t seed = 7;
  double eps = kDefaultFiniteDiffEps;
  double tolerance = kGradcheckTolerance;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  AdapterConfig cfg{a.vit_width, a.llm_width, a.heads, a.hidden, true};
  SeededRng rng(a.seed);
  SeededRng block_rng = rng.split(1);
  const AdapterBlock block = AdapterBlock::random(cfg, block_rng);
  SeededRng input_rng = rng.split(2);
  const Tensor x_low = Tensor::randn({a.tokens, a.vit_width}, input_rng);
  std::optional<Tensor> x_high;
  if (a.patches > 1) x_high = Tensor::randn({(a.patches - 1) * a.tokens, a.vit_width}, input_rng);
  const auto checks = gradcheck_adapter(block, x_low, x_high, a.seed, a.eps);
  print_gradcheck_table(std::cout, checks, a.tolerance);
  const bool ok = std::all_of(checks.begin(), checks.end(),
                              [&](const TensorCheck& c) { return c.passed(a.tolerance); });
  std::cout << (ok ? "gradcheck: pass" : "gradcheck: FAIL") << " (eps=" << a.eps
            << ", tolerance=" << a.tolerance << ")\n";
  return ok ? kExitOk : kExitThreshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparsecut: multi-level shortcut fusion between a vision encoder and a decoder"};
  app.require_subcommand(1);

  PatternArgs pattern_args;
  auto* pattern = app.add_subcommand("pattern", "Generate or validate a shortcut pattern");
  pattern->add_option("--order", pattern_args.order, "ushape | aligned");
  pattern->add_option("--dist", pattern_args.dist, "uniform | bottom | top");
  pattern->add_option("--sparse", pattern_args.sparse, "Sparse pattern with K connections");
  pattern->add_flag("--dense", pattern_args.dense, "One connection per encoder layer");
  pattern->add_option("--lv", pattern_args.lv, "Encoder depth");
  pattern->add_option("--lt", pattern_args.lt, "Decoder depth");
  pattern->add_option("--named", pattern_args.named, "Named layout a-f");
  pattern->add_option("--file", pattern_args.file, "Read a pattern file instead");
  pattern->add_option("--write", pattern_args.write, "Write the pattern file here");

  ForwardArgs forward_args;
  auto* forward = app.add_subcommand("forward", "Run the full pipeline and dump activations");
  forward->add_option("--config", forward_args.config, "key = value config file");
  forward->add_option("--image", forward_args.image, "PPM (P6/P5) or raw float32 image");
  forward->add_flag("--synthetic", forward_args.synthetic, "Use the seeded synthetic image");
  forward->add_option("--seed", forward_args.seed, "Override the config seed");
  forward->add_option("--sparse", forward_args.sparse, "Sparse uniform U-shape with K connections");
  forward->add_option("--mode", forward_args.mode, "shortcut | concat");
  forward->add_option("--high-res", forward_args.high_res, "Add high-resolution tiles");
  forward->add_option("--tiles", forward_args.tiles, "Tiles per side in high-res mode");
  forward->add_option("--text-length", forward_args.text_length, "Synthetic text tokens");
  forward->add_flag("--zero-adapter", forward_args.zero_adapter,
                    "Zero every adapter output except the shallowest connection's");
  forward->add_option("--out", forward_args.out, "Output directory");
  forward->add_option("--layers", forward_args.layers, "Decoder layers to dump (default all)")
      ->delimiter(',');

  FlopsArgs flops_args;
  auto* flops = app.add_subcommand("flops", "Analytic cost ledger");
  flops->add_option("--config", flops_args.config, "Scenario file (key = value)");
  flops->add_option("--preset", flops_args.preset, "llava15-low | llava15-high");
  flops->add_option("--mode", flops_args.mode, "shortcut | concat");
  flops->add_option("--patches", flops_args.patches, "N");
  flops->add_option("--text-length", flops_args.text_length, "M_t");
  flops->add_flag("--verify", flops_args.verify, "Run the model and compare counted MACs");
  flops->add_flag("--force", flops_args.force, "Allow --verify on large scenarios");
  flops->add_option("--csv", flops_args.csv, "Write the ledger as CSV");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Wall-clock scaling of attention");
  bench->add_option("--contexts", bench_args.contexts, "Context lengths")->delimiter(',');
  bench->add_option("--width", bench_args.width, "Attention width");
  bench->add_option("--reps", bench_args.reps, "Repetitions per point");
  bench->add_flag("--decoder", bench_args.decoder, "Also time the decoder for N=1 and N=5");
  bench->add_option("--config", bench_args.config, "Run config for --decoder");
  bench->add_option("--csv", bench_args.csv, "Write CSV here as well");

  GradcheckArgs grad_args;
  auto* grad = app.add_subcommand("gradcheck", "Check adapter gradients by finite differences");
  grad->add_option("--vit-width", grad_args.vit_width, "D_v");
  grad->add_option("--llm-width", grad_args.llm_width, "D_t");
  grad->add_option("--tokens", grad_args.tokens, "M_v");
  grad->add_option("--patches", grad_args.patches, "N (1 = self-attention)");
  grad->add_option("--heads", grad_args.heads, "Attention heads");
  grad->add_option("--hidden", grad_args.hidden, "MLP width (0 = 4 * D_v)");
  grad->add_option("--seed", grad_args.seed, "Seed for weights, inputs and probe");
  grad->add_option("--eps", grad_args.eps, "Finite-difference step");
  grad->add_option("--tolerance", grad_args.tolerance, "Maximum relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pattern) return cmd_pattern(pattern_args);
    if (*forward) return cmd_forward(forward_args);
    if (*flops) return cmd_flops(flops_args);
    if (*bench) return cmd_bench(bench_args);
    if (*grad) return cmd_gradcheck(grad_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitInvalid;
}

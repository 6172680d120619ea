// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sparsecut/config.hpp"
#include "sparsecut/flops_model.hpp"
#include "sparsecut/gradcheck.hpp"
#include "sparsecut/model.hpp"
#include "sparsecut/rng.hpp"
#include "sparsecut/shortcut_pattern.hpp"

using namespace sparsecut;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

// D_v = 8, D_t = 12, M_v = 4, M_t = 6, L_v = 4, L_t = 6.
RunConfig toy_run(std::size_t tiles, bool high_res) {
  RunConfig rc;
  rc.patching = PatchingConfig{4, 2, 3, tiles, high_res};
  rc.vit = VitConfig{4, 8, 2, 4.0};
  rc.llm = LlmConfig{6, 12, 3, 4.0, 16, 0};
  rc.adapter = AdapterConfig{8, 12, 1, 0, true};
  rc.text_length = 6;
  rc.pattern.dense = true;
  return rc;
}

PatchBundle toy_bundle(const RunConfig& rc, std::uint64_t seed) {
  SeededRng rng(seed);
  const ImageTensor img = synthetic_image(12, 3, rng);
  return build_bundle(img, rc.patching.base_resolution, rc.patching.tiles, rc.patching.high_res);
}

// 1. Zero-adapter / conventional equivalence.
Outcome zero_adapter_equivalence() {
  const auto start = Clock::now();
  RunConfig multi = toy_run(2, true);
  RunConfig single = toy_run(2, true);
  single.pattern.dense = false;
  single.pattern.count = 1;
  const ModelConfig mcfg = multi.model_config();
  const ModelConfig scfg = single.model_config();
  if (mcfg.shortcuts.size() != 4 || !scfg.shortcuts.is_conventional()) {
    return {false, "unexpected toy patterns"};
  }
  ModelWeights mw = ModelWeights::random(mcfg, 1);
  mw.zero_secondary_adapters();
  const ModelWeights sw = ModelWeights::random(scfg, 1);
  const PatchBundle bundle = toy_bundle(multi, 2);
  const auto ids = synthetic_text(6, 16, 3);
  const ForwardResult a = run_model(bundle, ids, mw, mcfg);
  const ForwardResult b = run_model(bundle, ids, sw, scfg);

  bool identical = a.decoder.logits == b.decoder.logits &&
                   a.decoder.final_hidden == b.decoder.final_hidden;
  for (std::size_t j = 0; j < a.decoder.layers.size(); ++j) {
    identical = identical && a.decoder.layers[j].visual_in == b.decoder.layers[j].visual_in &&
                a.decoder.layers[j].text_out == b.decoder.layers[j].text_out;
  }
  // the same statement at the decoder boundary: explicit zero tensors
  std::map<std::size_t, FusedVisualTokens> fused;
  for (const Connection& c : mcfg.shortcuts.connections()) {
    fused.emplace(c.llm, FusedVisualTokens{c.llm == 1 ? b.fused.at(1).z : Tensor::zeros({4, 12}),
                                           c.vit});
  }
  const Tensor t0 = embed_text(ids, sw.llm.embedding);
  const DecoderTrace direct = decode_forward(fused, mcfg.shortcuts, t0, sw.llm, mcfg.llm);
  identical = identical && direct.logits == b.decoder.logits;

  const double elapsed = seconds_since(start);
  return {identical && elapsed < 1.0,
          std::string(identical ? "bit-identical" : "MISMATCH") + ", " + fmt(elapsed, 3) + " s"};
}

// 2. FLOPs reproduction at LLaVA-1.5 scale.
Outcome flops_reproduction() {
  const auto start = Clock::now();
  const double low = analytic_flops(CostScenario::llava15(FusionMode::Concat, false)).total_flops() / 1e12;
  const double hs = analytic_flops(CostScenario::llava15(FusionMode::Shortcut, true)).total_flops() / 1e12;
  const double hc = analytic_flops(CostScenario::llava15(FusionMode::Concat, true)).total_flops() / 1e12;
  const auto within = [](double got, double want) { return std::abs(got - want) <= 0.15 * want; };
  const double ratio = hc / hs;
  const bool ok = within(low, 8.04) && within(hs, 9.6) && within(hc, 43.62) && ratio >= 4.0;
  return {ok, "low-res " + fmt(low) + "T (8.04T), high-res shortcut " + fmt(hs) +
                  "T (9.6T), concat " + fmt(hc) + "T (43.62T), ratio " + fmt(ratio, 3) + ", " +
                  fmt(seconds_since(start) * 1e3, 3) + " ms"};
}

// 3. Analytic MACs equal instrumented MACs on a toy scenario matrix.
Outcome counter_equivalence() {
  const auto start = Clock::now();
  struct Geometry {
    std::size_t res, patch, text, vit_layers, vit_width, vit_heads, llm_layers, llm_width,
        llm_heads, vocab, shortcuts, adapter_heads;
  };
  const Geometry geometries[] = {
      {8, 2, 6, 4, 8, 2, 6, 12, 3, 16, 3, 1},
      {4, 2, 5, 3, 8, 1, 4, 8, 2, 0, 2, 2},
      {6, 3, 9, 2, 12, 3, 5, 16, 4, 7, 2, 1},
  };
  std::size_t scenarios = 0, matched = 0;
  std::string first_failure;
  for (const Geometry& g : geometries) {
    for (auto mode : {FusionMode::Shortcut, FusionMode::Concat}) {
      for (std::size_t n : {1u, 5u}) {
        CostScenario sc;
        sc.mode = mode;
        sc.patches = n;
        sc.base_resolution = g.res;
        sc.patch_size = g.patch;
        sc.text_length = g.text;
        sc.vit_layers = g.vit_layers;
        sc.vit_width = g.vit_width;
        sc.vit_heads = g.vit_heads;
        sc.llm_layers = g.llm_layers;
        sc.llm_width = g.llm_width;
        sc.llm_heads = g.llm_heads;
        sc.vocab = g.vocab;
        sc.shortcuts = g.shortcuts;
        sc.adapter_heads = g.adapter_heads;
        ++scenarios;
        const Discrepancy d = measured_vs_analytic(sc, scenarios);
        if (d.matches()) {
          ++matched;
        } else if (first_failure.empty()) {
          first_failure = "; first mismatch:\n" + d.describe();
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {scenarios >= 8 && matched == scenarios && elapsed < 10.0,
          std::to_string(matched) + "/" + std::to_string(scenarios) + " scenarios exact, " +
              fmt(elapsed, 3) + " s" + first_failure};
}

bool brute_ushape(const ShortcutSet& s) {
  for (const Connection& a : s.connections())
    for (const Connection& b : s.connections())
      if (!(a == b) && (a.vit > b.vit) != (a.llm < b.llm)) return false;
  return true;
}

// 4. Pattern suite.
Outcome pattern_suite() {
  std::size_t checked = 0;
  std::string problem;
  for (std::size_t lt : {32u, 40u}) {
    for (char key : {'a', 'b', 'c', 'd', 'e', 'f'}) {
      const PatternSpec spec = named_pattern(key);
      const ShortcutSet s = generate(spec, 24, lt);
      const PatternReport r = classify(s);
      const bool order_ok = r.order == (spec.order == ConnectionOrder::UShape ? ObservedOrder::UShape
                                                                              : ObservedOrder::AlignedDepth);
      const bool ok = order_ok && r.distribution == spec.distribution && r.dense == spec.dense &&
                      r.count == spec.connections(24) &&
                      (spec.order != ConnectionOrder::UShape || brute_ushape(s));
      if (!ok && problem.empty())
        problem = std::string(named_pattern_label(key)) + " at L_t=" + std::to_string(lt);
      ++checked;
    }
    const ShortcutSet def = generate(PatternSpec{}, 24, lt);
    const std::size_t llm_stride = lt / 8;
    bool strides = def.size() == 8;
    for (std::size_t m = 0; strides && m < 8; ++m) {
      strides = def.connections()[m].vit == 24 - 3 * m && def.connections()[m].llm == 1 + llm_stride * m;
    }
    if (!strides && problem.empty()) problem = "default strides at L_t=" + std::to_string(lt);
  }
  // U-shape monotonicity for every generated U-shape set over a grid of depths
  std::size_t ushape_sets = 0;
  for (std::size_t lv = 1; lv <= 24; ++lv)
    for (std::size_t lt = 1; lt <= 40; ++lt)
      for (auto dist : {EndDistribution::Uniform, EndDistribution::BottomSkewed, EndDistribution::TopSkewed})
        for (std::size_t k = 1; k <= std::min(lv, lt); ++k) {
          ++ushape_sets;
          if (!brute_ushape(generate(PatternSpec{ConnectionOrder::UShape, dist, false, k}, lv, lt)) &&
              problem.empty())
            problem = "U-shape violated at (" + std::to_string(lv) + "," + std::to_string(lt) + ")";
        }
  return {problem.empty(), std::to_string(checked) + " named round-trips, strides 3/4 and 3/5, " +
                               std::to_string(ushape_sets) + " U-shape sets monotone" +
                               (problem.empty() ? "" : "; failed: " + problem)};
}

// 5. Context-length invariance.
Outcome context_invariance() {
  std::string detail;
  bool ok = true;
  for (auto [tiles, high] : {std::pair<std::size_t, bool>{2, false}, {2, true}, {3, true}}) {
    RunConfig rc = toy_run(tiles, high);
    const ModelConfig cfg = rc.model_config();
    const ForwardResult r = run_model(toy_bundle(rc, 4), synthetic_text(6, 16, 5),
                                      ModelWeights::random(cfg, 6), cfg);
    const std::size_t n = r.x0.dim(0);
    ok = ok && r.decoder.context_length() == 4 + 6;
    for (const auto& [layer, tokens] : r.fused) ok = ok && tokens.z.rows() == 4;
    detail += "N=" + std::to_string(n) + ": C=" + std::to_string(r.decoder.context_length()) + " ";
  }
  // adapter output rows across self/cross attention, head counts and residual settings
  for (std::size_t heads : {1u, 2u}) {
    for (bool residual : {true, false}) {
      SeededRng rng(7 + heads);
      const AdapterBlock block = AdapterBlock::random(AdapterConfig{8, 12, heads, 0, residual}, rng);
      for (std::size_t n : {1u, 5u, 10u}) {
        const Tensor low = Tensor::randn({4, 8}, rng);
        std::optional<Tensor> high;
        if (n > 1) high = Tensor::randn({(n - 1) * 4, 8}, rng);
        ok = ok && fuse(low, high, block).z.rows() == 4;
      }
    }
  }
  return {ok, detail + "(M_v + M_t = 10); adapter rows = M_v for N in {1,5,10}"};
}

// 6. Gradient certification.
Outcome gradient_certification() {
  const auto start = Clock::now();
  SeededRng rng(8);
  AdapterBlock block = AdapterBlock::random(AdapterConfig{4, 6, 1, 0, true}, rng);
  block.ln_gain = Tensor::randn({4}, rng, 0.5);
  for (double& g : block.ln_gain.data()) g += 1.0;
  block.ln_bias = Tensor::randn({4}, rng, 0.1);
  const Tensor x_low = Tensor::randn({2, 4}, rng);
  const std::optional<Tensor> x_high = Tensor::randn({8, 4}, rng);
  double worst = 0.0;
  std::string worst_name;
  for (const TensorCheck& c : gradcheck_adapter(block, x_low, x_high, 9, 1e-5)) {
    if (c.result.max_relative_error >= worst) {
      worst = c.result.max_relative_error;
      worst_name = c.name;
    }
  }
  const ConvergenceCheck conv = adapter_convergence(block, x_low, x_high, 9, 1e-3);
  const double ratio = conv.ratio();
  const double elapsed = seconds_since(start);
  const bool ok = worst < 1e-5 && ratio >= 2.5 && ratio <= 6.0 && elapsed < 30.0;
  return {ok, "max rel err " + fmt(worst, 3) + " (" + worst_name + ") at eps=1e-5; error ratio " +
                  fmt(ratio, 4) + " for eps 1e-3 -> 5e-4; " + fmt(elapsed, 3) + " s"};
}

// 7. Causality under random perturbations.
Outcome causality() {
  RunConfig rc = toy_run(2, true);
  const ModelConfig cfg = rc.model_config();
  const ModelWeights w = ModelWeights::random(cfg, 10);
  const ForwardResult base = run_model(toy_bundle(rc, 11), synthetic_text(6, 16, 12), w, cfg);
  const Tensor t0 = embed_text(synthetic_text(6, 16, 12), w.llm.embedding);
  const std::size_t visual = base.decoder.visual_length;
  const std::size_t context = base.decoder.context_length();
  const Tensor& ref = base.decoder.logits;

  SeededRng rng(13);
  std::size_t violations = 0, moved = 0;
  const std::size_t trials = 100;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t q = 1 + rng.next_u64() % (context - 1);
    std::map<std::size_t, FusedVisualTokens> fused = base.fused;
    Tensor t1 = t0;
    const double delta = rng.uniform(-2.0, 2.0);
    const std::size_t col = rng.next_u64() % cfg.llm.width;
    if (q < visual) {
      // perturb this visual position in every injection
      for (auto& [layer, tokens] : fused) tokens.z(q, col) += delta;
    } else {
      t1(q - visual, col) += delta;
    }
    const Tensor out = decode_forward(fused, cfg.shortcuts, t1, w.llm, cfg.llm).logits;
    for (std::size_t p = 0; p < q; ++p)
      for (std::size_t c = 0; c < out.cols(); ++c)
        if (out(p, c) != ref(p, c)) ++violations;
    bool changed = false;
    for (std::size_t c = 0; c < out.cols(); ++c) changed = changed || out(q, c) != ref(q, c);
    moved += changed;
  }
  return {violations == 0 && moved == trials,
          std::to_string(trials) + " trials, " + std::to_string(violations) +
              " earlier logits changed, perturbed position moved in " + std::to_string(moved)};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 8. Determinism of the forward command.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "sparsecut_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto run = [&](const std::string& name) {
    const std::string cmd = std::string("\"") + SPARSECUT_CLI + "\" forward --synthetic --seed 77 --out \"" +
                            (root / name).string() + "\" > \"" + (root / (name + ".log")).string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  if (run("first") != 0 || run("second") != 0) return {false, "forward command failed"};
  const auto stem_a = root / "first" / "activations";
  const auto stem_b = root / "second" / "activations";
  const std::string bin_a = file_bytes(TensorArchive::data_path(stem_a));
  const std::string man_a = file_bytes(TensorArchive::manifest_path(stem_a));
  const bool same = !bin_a.empty() && bin_a == file_bytes(TensorArchive::data_path(stem_b)) &&
                    man_a == file_bytes(TensorArchive::manifest_path(stem_b));
  const std::size_t bytes = bin_a.size();
  fs::remove_all(root);
  return {same, std::string(same ? "byte-identical" : "DIFFERENT") + " dumps (" +
                    std::to_string(bytes) + " data bytes)"};
}

// 9. Empirical quadratic trend and N-independence of shortcut decoding.
Outcome quadratic_trend() {
  const auto rows = attention_scaling_bench({512, 1024, 2048}, 64, 5, 14);
  const double r1 = rows[1].median_seconds / rows[0].median_seconds;
  const double r2 = rows[2].median_seconds / rows[1].median_seconds;
  RunConfig rc;
  rc.vit = VitConfig{4, 32, 2, 4.0};
  rc.llm = LlmConfig{8, 64, 4, 4.0, 64, 0};
  rc.pattern.count = 4;
  rc.patching.base_resolution = 56;
  rc.text_length = 32;
  const auto dec = decoder_patch_bench(rc, {0, 2}, 15);
  const double variation = std::abs(dec[1].median_seconds - dec[0].median_seconds) /
                           std::min(dec[0].median_seconds, dec[1].median_seconds);
  const bool ok = r1 >= 3.0 && r1 <= 6.0 && r2 >= 3.0 && r2 <= 6.0 && variation < 0.10 &&
                  dec[0].context == dec[1].context;
  return {ok, "t(1024)/t(512) " + fmt(r1, 3) + ", t(2048)/t(1024) " + fmt(r2, 3) +
                  "; decoder N=1 " + fmt(dec[0].median_seconds * 1e3, 4) + " ms vs N=5 " +
                  fmt(dec[1].median_seconds * 1e3, 4) + " ms at C=" + std::to_string(dec[0].context) +
                  " (" + fmt(variation * 100, 3) + "%)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"zero-adapter equivalence", zero_adapter_equivalence},
      {"FLOPs reproduction", flops_reproduction},
      {"counter equivalence", counter_equivalence},
      {"pattern suite", pattern_suite},
      {"context-length invariance", context_invariance},
      {"gradient certification", gradient_certification},
      {"causality", causality},
      {"determinism", determinism},
      {"quadratic trend", quadratic_trend},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}

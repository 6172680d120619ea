#include "sparsecut/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sparsecut/errors.hpp"

namespace sparsecut {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_key(const std::string& key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": bad key '" + key + "'");
    }
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in, path.string());
}

std::optional<std::string> KeyValueConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint64_t> KeyValueConfig::get_uint(const std::string& key) const {
  const auto text = get_string(key);
  if (!text) return std::nullopt;
  try {
    std::size_t used = 0;
    if (!text->empty() && (*text)[0] == '-') throw std::invalid_argument(*text);
    const auto v = std::stoull(*text, &used, 0);
    if (used != text->size()) throw std::invalid_argument(*text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + *text +
                      "'");
  }
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
  const auto text = get_string(key);
  if (!text) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(*text, &used);
    if (used != text->size()) throw std::invalid_argument(*text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + *text + "'");
  }
}

std::optional<bool> KeyValueConfig::get_bool(const std::string& key) const {
  const auto text = get_string(key);
  if (!text) return std::nullopt;
  if (*text == "true" || *text == "1" || *text == "yes" || *text == "on") return true;
  if (*text == "false" || *text == "0" || *text == "no" || *text == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + *text + "'");
}

std::string_view to_string(FusionMode m) {
  return m == FusionMode::Shortcut ? "shortcut" : "concat";
}

std::optional<FusionMode> parse_fusion_mode(std::string_view text) {
  if (text == "shortcut") return FusionMode::Shortcut;
  if (text == "concat") return FusionMode::Concat;
  return std::nullopt;
}

void RunConfig::apply(const KeyValueConfig& kv) {
  static const char* const kKnown[] = {
      "seed",          "base_resolution",      "patch_size",    "channels",
      "tiles",         "high_res",             "vit_layers",    "vit_width",
      "vit_heads",     "vit_mlp_ratio",        "llm_layers",    "llm_width",
      "llm_heads",     "llm_mlp_ratio",        "vocab",         "max_context",
      "adapter_heads", "adapter_hidden",       "adapter_residual", "pattern_order",
      "pattern_distribution", "pattern_density", "pattern_count", "pattern_file",
      "mode",          "text_length",          "output_dir"};
  for (const auto& [key, value] : kv.values()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  const auto set_size = [&](const char* key, std::size_t& dst) {
    if (auto v = kv.get_uint(key)) dst = static_cast<std::size_t>(*v);
  };
  if (auto v = kv.get_uint("seed")) seed = *v;
  set_size("base_resolution", patching.base_resolution);
  set_size("patch_size", patching.patch_size);
  set_size("channels", patching.channels);
  set_size("tiles", patching.tiles);
  if (auto v = kv.get_bool("high_res")) patching.high_res = *v;
  set_size("vit_layers", vit.layers);
  set_size("vit_width", vit.width);
  set_size("vit_heads", vit.heads);
  if (auto v = kv.get_double("vit_mlp_ratio")) vit.mlp_ratio = *v;
  set_size("llm_layers", llm.layers);
  set_size("llm_width", llm.width);
  set_size("llm_heads", llm.heads);
  if (auto v = kv.get_double("llm_mlp_ratio")) llm.mlp_ratio = *v;
  set_size("vocab", llm.vocab);
  set_size("max_context", llm.max_context);
  set_size("adapter_heads", adapter.heads);
  set_size("adapter_hidden", adapter.hidden);
  if (auto v = kv.get_bool("adapter_residual")) adapter.residual = *v;
  if (auto v = kv.get_string("pattern_order")) {
    const auto o = parse_order(*v);
    if (!o) throw ConfigError("pattern_order must be ushape or aligned, got '" + *v + "'");
    pattern.order = *o;
  }
  if (auto v = kv.get_string("pattern_distribution")) {
    const auto d = parse_distribution(*v);
    if (!d) throw ConfigError("pattern_distribution must be uniform, bottom or top");
    pattern.distribution = *d;
  }
  if (auto v = kv.get_string("pattern_density")) {
    if (*v != "sparse" && *v != "dense") throw ConfigError("pattern_density must be sparse or dense");
    pattern.dense = *v == "dense";
  }
  set_size("pattern_count", pattern.count);
  if (auto v = kv.get_string("pattern_file")) pattern_file = *v;
  if (auto v = kv.get_string("mode")) {
    const auto m = parse_fusion_mode(*v);
    if (!m) throw ConfigError("mode must be shortcut or concat, got '" + *v + "'");
    mode = *m;
  }
  set_size("text_length", text_length);
  if (auto v = kv.get_string("output_dir")) output_dir = *v;
}

void RunConfig::apply_environment() {
  if (const char* env = std::getenv("SPARSECUT_SEED")) {
    KeyValueConfig kv;
    kv.set("seed", env);
    seed = *kv.get_uint("seed");
  }
}

ShortcutSet RunConfig::shortcuts() const {
  if (pattern_file) {
    ShortcutSet s = read_pattern_file(*pattern_file);
    if (s.vit_layers() != vit.layers || s.llm_layers() != llm.layers) {
      throw ConfigError("pattern file depths do not match vit_layers/llm_layers");
    }
    return s;
  }
  try {
    return generate(pattern, vit.layers, llm.layers);
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.patching = patching;
  m.vit = vit;
  m.llm = llm;
  m.adapter = adapter;
  m.adapter.vit_width = vit.width;
  m.adapter.llm_width = llm.width;
  m.mode = mode;
  m.shortcuts = shortcuts();
  if (m.llm.max_context == 0) {
    // Sized for the concat layout so the table is identical across modes.
    const std::size_t tiles = std::max<std::size_t>(patching.tiles, 1);
    m.llm.max_context = (1 + tiles * tiles) * patching.tokens() + text_length;
  }
  m.validate(text_length);
  return m;
}

void RunConfig::write(std::ostream& out) const {
  out << "seed = " << seed << '\n'
      << "base_resolution = " << patching.base_resolution << '\n'
      << "patch_size = " << patching.patch_size << '\n'
      << "channels = " << patching.channels << '\n'
      << "tiles = " << patching.tiles << '\n'
      << "high_res = " << (patching.high_res ? "true" : "false") << '\n'
      << "vit_layers = " << vit.layers << '\n'
      << "vit_width = " << vit.width << '\n'
      << "vit_heads = " << vit.heads << '\n'
      << "vit_mlp_ratio = " << vit.mlp_ratio << '\n'
      << "llm_layers = " << llm.layers << '\n'
      << "llm_width = " << llm.width << '\n'
      << "llm_heads = " << llm.heads << '\n'
      << "llm_mlp_ratio = " << llm.mlp_ratio << '\n'
      << "vocab = " << llm.vocab << '\n'
      << "max_context = " << llm.max_context << '\n'
      << "adapter_heads = " << adapter.heads << '\n'
      << "adapter_hidden = " << adapter.hidden << '\n'
      << "adapter_residual = " << (adapter.residual ? "true" : "false") << '\n'
      << "pattern_order = " << to_string(pattern.order) << '\n'
      << "pattern_distribution = " << to_string(pattern.distribution) << '\n'
      << "pattern_density = " << (pattern.dense ? "dense" : "sparse") << '\n'
      << "pattern_count = " << pattern.count << '\n';
  if (pattern_file) out << "pattern_file = " << pattern_file->string() << '\n';
  out << "mode = " << to_string(mode) << '\n'
      << "text_length = " << text_length << '\n'
      << "output_dir = " << output_dir.string() << '\n';
}

}  // namespace sparsecut

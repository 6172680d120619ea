#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "sparsecut/model.hpp"
#include "sparsecut/shortcut_pattern.hpp"

namespace sparsecut {

// Flat "key = value" file. '#' starts a comment, blank lines are ignored,
// keys are [A-Za-z0-9_.-]+, values run to end of line with surrounding
// whitespace trimmed. A repeated key overrides the earlier one.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  [[nodiscard]] bool contains(const std::string& key) const { return values_.contains(key); }
  [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

  [[nodiscard]] std::optional<std::string> get_string(const std::string& key) const;
  [[nodiscard]] std::optional<std::uint64_t> get_uint(const std::string& key) const;
  [[nodiscard]] std::optional<double> get_double(const std::string& key) const;
  [[nodiscard]] std::optional<bool> get_bool(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

// Everything a forward run needs. Defaults are a desk-scale model with the
// default layout: 24 encoder layers, 32 decoder layers, eight sparse uniform
// U-shape shortcuts, one low-resolution view plus four tiles.
struct RunConfig {
  PatchingConfig patching;
  VitConfig vit{24, 32, 2, 4.0};
  LlmConfig llm{32, 48, 4, 4.0, 64, 0};
  AdapterConfig adapter{32, 48, 1, 0, true};
  PatternSpec pattern;
  std::optional<std::filesystem::path> pattern_file;
  FusionMode mode = FusionMode::Shortcut;
  std::size_t text_length = 8;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  // Unknown keys raise ConfigError.
  void apply(const KeyValueConfig& kv);
  // SPARSECUT_SEED, when set, replaces `seed`.
  void apply_environment();

  [[nodiscard]] ShortcutSet shortcuts() const;
  // Resolves the pattern and fills derived sizes (adapter widths, a
  // positional table large enough for the largest visual length).
  [[nodiscard]] ModelConfig model_config() const;

  void write(std::ostream& out) const;
};

std::string_view to_string(FusionMode m);
std::optional<FusionMode> parse_fusion_mode(std::string_view text);

}  // namespace sparsecut

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sparsecut {

// One shortcut: encoder layer `vit` (1..L_v) feeds decoder layer `llm` (1..L_t).
struct Connection {
  std::size_t vit = 0;
  std::size_t llm = 0;

  friend auto operator<=>(const Connection&, const Connection&) = default;
};

// Set of shortcut connections, kept sorted by decoder layer. A decoder layer
// has at most one incoming shortcut.
class ShortcutSet {
 public:
  ShortcutSet() = default;
  // Throws ValidationError on out-of-range indices or a repeated decoder layer.
  ShortcutSet(std::size_t vit_layers, std::size_t llm_layers, std::vector<Connection> connections);

  // S = {(L_v, 1)}: final encoder output into the first decoder layer.
  static ShortcutSet conventional(std::size_t vit_layers, std::size_t llm_layers);

  [[nodiscard]] std::size_t vit_layers() const { return vit_layers_; }
  [[nodiscard]] std::size_t llm_layers() const { return llm_layers_; }
  [[nodiscard]] const std::vector<Connection>& connections() const { return connections_; }
  [[nodiscard]] std::size_t size() const { return connections_.size(); }
  [[nodiscard]] bool empty() const { return connections_.empty(); }

  // Encoder layer feeding decoder layer `llm`, if any.
  [[nodiscard]] std::optional<std::size_t> source_for(std::size_t llm) const;
  [[nodiscard]] bool is_conventional() const;

  friend bool operator==(const ShortcutSet&, const ShortcutSet&) = default;

 private:
  std::size_t vit_layers_ = 0;
  std::size_t llm_layers_ = 0;
  std::vector<Connection> connections_;
};

enum class ConnectionOrder { UShape, AlignedDepth };
enum class EndDistribution { Uniform, BottomSkewed, TopSkewed };

struct PatternSpec {
  ConnectionOrder order = ConnectionOrder::UShape;
  EndDistribution distribution = EndDistribution::Uniform;
  bool dense = false;
  std::size_t count = 8;  // connections when sparse; ignored when dense

  [[nodiscard]] std::size_t connections(std::size_t vit_layers) const {
    return dense ? vit_layers : count;
  }
};

// The six layouts compared in the shortcut-pattern ablation, keyed 'a'..'f':
// Dense-Bottom, Dense-Uniform, Sparse-Uniform (default), Sparse-Bottom,
// Sparse-Top, Sparse-ReverseUniform.
PatternSpec named_pattern(char key);
std::string_view named_pattern_label(char key);

// Encoder ends are deepest-anchored and evenly spaced:
//   i_m = L_v - floor(m * L_v / k), m = 0..k-1
// Decoder ends: Uniform j_m = 1 + floor(m * L_t / k); BottomSkewed 1..k;
// TopSkewed L_t-k+1..L_t. UShape pairs the deepest encoder end with the
// shallowest decoder end; AlignedDepth pairs both ascending.
// When k divides the depth these are the fixed strides L_v/k and L_t/k.
ShortcutSet generate(const PatternSpec& spec, std::size_t vit_layers, std::size_t llm_layers);

enum class ObservedOrder { Degenerate, UShape, AlignedDepth, Mixed };

struct PatternReport {
  ObservedOrder order = ObservedOrder::Degenerate;
  bool ushape = true;   // i1 > i2 <=> j1 < j2 for every pair
  bool aligned = true;  // i1 > i2 <=> j1 > j2 for every pair
  EndDistribution distribution = EndDistribution::Uniform;
  double density = 0.0;  // |S| / L_v
  bool dense = false;    // |S| == L_v
  std::size_t count = 0;
  bool conventional = false;
  // Normalized decoder-end quantiles, (j - 1) / (L_t - 1).
  double q25 = 0.0, q50 = 0.0, q75 = 0.0;

  [[nodiscard]] bool satisfies(ConnectionOrder o) const {
    return o == ConnectionOrder::UShape ? ushape : aligned;
  }
};

// Distribution thresholds on the normalized decoder-end quantiles: Uniform when
// q25 <= 0.35 and q75 >= 0.6; otherwise BottomSkewed when q50 < 0.5, else
// TopSkewed.
inline constexpr double kUniformLowerQuartileMax = 0.35;
inline constexpr double kUniformUpperQuartileMin = 0.6;

PatternReport classify(const ShortcutSet& s);

std::string_view to_string(ConnectionOrder o);
std::string_view to_string(EndDistribution d);
std::string_view to_string(ObservedOrder o);
std::optional<ConnectionOrder> parse_order(std::string_view text);
std::optional<EndDistribution> parse_distribution(std::string_view text);

// Two-column layer diagram: encoder layers on the left, decoder layers on the
// right, top row deepest. Each connection is drawn on its decoder layer's row.
std::string render_ascii(const ShortcutSet& s);

// Pattern file: header "L_v L_t", then one "i j" per line. '#' starts a
// comment; blank lines are ignored on read.
ShortcutSet read_pattern(std::istream& in);
ShortcutSet read_pattern_file(const std::filesystem::path& path);
void write_pattern(std::ostream& out, const ShortcutSet& s);
void write_pattern_file(const std::filesystem::path& path, const ShortcutSet& s);

}  // namespace sparsecut

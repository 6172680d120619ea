#include "sparsecut/shortcut_pattern.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sparsecut/errors.hpp"

namespace sparsecut {

ShortcutSet::ShortcutSet(std::size_t vit_layers, std::size_t llm_layers,
                         std::vector<Connection> connections)
    : vit_layers_(vit_layers), llm_layers_(llm_layers), connections_(std::move(connections)) {
  if (vit_layers_ == 0 || llm_layers_ == 0) {
    throw ValidationError("pattern depths must be positive");
  }
  std::sort(connections_.begin(), connections_.end(),
            [](const Connection& a, const Connection& b) { return a.llm < b.llm; });
  for (std::size_t n = 0; n < connections_.size(); ++n) {
    const Connection& c = connections_[n];
    if (c.vit < 1 || c.vit > vit_layers_) {
      throw ValidationError("encoder layer " + std::to_string(c.vit) + " outside 1.." +
                            std::to_string(vit_layers_));
    }
    if (c.llm < 1 || c.llm > llm_layers_) {
      throw ValidationError("decoder layer " + std::to_string(c.llm) + " outside 1.." +
                            std::to_string(llm_layers_));
    }
    if (n > 0 && connections_[n - 1].llm == c.llm) {
      throw ValidationError("decoder layer " + std::to_string(c.llm) +
                            " has more than one incoming shortcut");
    }
  }
}

ShortcutSet ShortcutSet::conventional(std::size_t vit_layers, std::size_t llm_layers) {
  return ShortcutSet(vit_layers, llm_layers, {{vit_layers, 1}});
}

std::optional<std::size_t> ShortcutSet::source_for(std::size_t llm) const {
  for (const Connection& c : connections_) {
    if (c.llm == llm) return c.vit;
  }
  return std::nullopt;
}

bool ShortcutSet::is_conventional() const {
  return connections_.size() == 1 && connections_[0].vit == vit_layers_ &&
         connections_[0].llm == 1;
}

PatternSpec named_pattern(char key) {
  using enum ConnectionOrder;
  using enum EndDistribution;
  switch (key) {
    case 'a': return {UShape, BottomSkewed, true, 0};
    case 'b': return {UShape, Uniform, true, 0};
    case 'c': return {UShape, Uniform, false, 8};
    case 'd': return {UShape, BottomSkewed, false, 8};
    case 'e': return {UShape, TopSkewed, false, 8};
    case 'f': return {AlignedDepth, Uniform, false, 8};
    default: throw UsageError(std::string("unknown named pattern '") + key + "'");
  }
}

std::string_view named_pattern_label(char key) {
  switch (key) {
    case 'a': return "dense-bottom";
    case 'b': return "dense-uniform";
    case 'c': return "sparse-uniform";
    case 'd': return "sparse-bottom";
    case 'e': return "sparse-top";
    case 'f': return "sparse-reverse-uniform";
    default: throw UsageError(std::string("unknown named pattern '") + key + "'");
  }
}

ShortcutSet generate(const PatternSpec& spec, std::size_t vit_layers, std::size_t llm_layers) {
  if (vit_layers == 0 || llm_layers == 0) throw UsageError("pattern depths must be positive");
  const std::size_t k = spec.connections(vit_layers);
  if (k < 1 || k > std::min(vit_layers, llm_layers)) {
    throw UsageError("connection count " + std::to_string(k) + " outside 1..min(L_v, L_t) = " +
                     std::to_string(std::min(vit_layers, llm_layers)));
  }
  std::vector<std::size_t> vit_ends(k), llm_ends(k);
  for (std::size_t m = 0; m < k; ++m) {
    vit_ends[m] = vit_layers - (m * vit_layers) / k;
    switch (spec.distribution) {
      case EndDistribution::Uniform: llm_ends[m] = 1 + (m * llm_layers) / k; break;
      case EndDistribution::BottomSkewed: llm_ends[m] = 1 + m; break;
      case EndDistribution::TopSkewed: llm_ends[m] = llm_layers - k + 1 + m; break;
    }
  }
  // vit_ends is descending, llm_ends ascending.
  if (spec.order == ConnectionOrder::AlignedDepth) std::reverse(vit_ends.begin(), vit_ends.end());
  std::vector<Connection> connections;
  connections.reserve(k);
  for (std::size_t m = 0; m < k; ++m) connections.push_back({vit_ends[m], llm_ends[m]});
  return ShortcutSet(vit_layers, llm_layers, std::move(connections));
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

PatternReport classify(const ShortcutSet& s) {
  PatternReport r;
  const auto& cs = s.connections();
  r.count = cs.size();
  r.density = static_cast<double>(cs.size()) / static_cast<double>(s.vit_layers());
  r.dense = cs.size() == s.vit_layers();
  r.conventional = s.is_conventional();
  for (std::size_t a = 0; a < cs.size(); ++a) {
    for (std::size_t b = a + 1; b < cs.size(); ++b) {
      const bool deeper_vit = cs[a].vit > cs[b].vit;
      const bool shallower_vit = cs[a].vit < cs[b].vit;
      // cs is sorted by llm with no repeats, so cs[a].llm < cs[b].llm.
      if (!deeper_vit) r.ushape = false;
      if (!shallower_vit) r.aligned = false;
    }
  }
  if (cs.size() < 2) {
    r.order = ObservedOrder::Degenerate;
  } else if (r.ushape) {
    r.order = ObservedOrder::UShape;
  } else if (r.aligned) {
    r.order = ObservedOrder::AlignedDepth;
  } else {
    r.order = ObservedOrder::Mixed;
  }

  std::vector<double> ends;
  ends.reserve(cs.size());
  const double span = s.llm_layers() > 1 ? static_cast<double>(s.llm_layers() - 1) : 1.0;
  for (const Connection& c : cs) ends.push_back(static_cast<double>(c.llm - 1) / span);
  r.q25 = quantile(ends, 0.25);
  r.q50 = quantile(ends, 0.5);
  r.q75 = quantile(ends, 0.75);
  if (r.q25 <= kUniformLowerQuartileMax && r.q75 >= kUniformUpperQuartileMin) {
    r.distribution = EndDistribution::Uniform;
  } else if (r.q50 < 0.5) {
    r.distribution = EndDistribution::BottomSkewed;
  } else {
    r.distribution = EndDistribution::TopSkewed;
  }
  return r;
}

std::string_view to_string(ConnectionOrder o) {
  return o == ConnectionOrder::UShape ? "ushape" : "aligned";
}

std::string_view to_string(EndDistribution d) {
  switch (d) {
    case EndDistribution::Uniform: return "uniform";
    case EndDistribution::BottomSkewed: return "bottom";
    case EndDistribution::TopSkewed: return "top";
  }
  return "?";
}

std::string_view to_string(ObservedOrder o) {
  switch (o) {
    case ObservedOrder::Degenerate: return "degenerate";
    case ObservedOrder::UShape: return "ushape";
    case ObservedOrder::AlignedDepth: return "aligned";
    case ObservedOrder::Mixed: return "mixed";
  }
  return "?";
}

std::optional<ConnectionOrder> parse_order(std::string_view text) {
  if (text == "ushape" || text == "u") return ConnectionOrder::UShape;
  if (text == "aligned" || text == "aligned-depth" || text == "reverse") {
    return ConnectionOrder::AlignedDepth;
  }
  return std::nullopt;
}

std::optional<EndDistribution> parse_distribution(std::string_view text) {
  if (text == "uniform") return EndDistribution::Uniform;
  if (text == "bottom" || text == "bottom-skewed") return EndDistribution::BottomSkewed;
  if (text == "top" || text == "top-skewed") return EndDistribution::TopSkewed;
  return std::nullopt;
}

std::string render_ascii(const ShortcutSet& s) {
  std::ostringstream out;
  const std::size_t depth = std::max(s.vit_layers(), s.llm_layers());
  const auto label = [](char prefix, std::size_t n) { return prefix + std::to_string(n); };
  std::vector<bool> tapped(s.vit_layers() + 1, false);
  for (const Connection& c : s.connections()) tapped[c.vit] = true;

  out << std::setw(6) << "ViT" << " |" << std::string(16, ' ') << "| LLM\n";
  for (std::size_t row = depth; row >= 1; --row) {
    std::string left = row <= s.vit_layers() ? label('V', row) + (tapped[row] ? "*" : " ") : "";
    std::string middle(16, ' ');
    if (const auto src = s.source_for(row)) {
      std::string arrow = " " + label('V', *src) + " ";
      arrow += std::string(15 - arrow.size(), '=') + ">";
      middle = arrow;
    }
    const std::string right = row <= s.llm_layers() ? label('L', row) : "";
    out << std::setw(6) << left << " |" << middle << "| " << right << '\n';
  }
  return out.str();
}

namespace {

std::size_t parse_index(const std::string& token, std::size_t line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(token, &used);
    if (used != token.size() || v < 0) throw std::invalid_argument(token);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ValidationError("pattern line " + std::to_string(line) + ": bad integer '" + token +
                          "'");
  }
}

}  // namespace

ShortcutSet read_pattern(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t vit_layers = 0, llm_layers = 0;
  std::vector<Connection> connections;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream fields(raw);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    if (tokens.size() != 2) {
      throw ValidationError("pattern line " + std::to_string(line_no) +
                            ": expected two integers");
    }
    const std::size_t a = parse_index(tokens[0], line_no);
    const std::size_t b = parse_index(tokens[1], line_no);
    if (!have_header) {
      vit_layers = a;
      llm_layers = b;
      have_header = true;
    } else {
      connections.push_back({a, b});
    }
  }
  if (!have_header) throw ValidationError("pattern file has no 'L_v L_t' header");
  return ShortcutSet(vit_layers, llm_layers, std::move(connections));
}

ShortcutSet read_pattern_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  return read_pattern(in);
}

void write_pattern(std::ostream& out, const ShortcutSet& s) {
  out << s.vit_layers() << ' ' << s.llm_layers() << '\n';
  for (const Connection& c : s.connections()) out << c.vit << ' ' << c.llm << '\n';
}

void write_pattern_file(const std::filesystem::path& path, const ShortcutSet& s) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  write_pattern(out, s);
}

}  // namespace sparsecut

#pragma once

#include <cstddef>
#include <vector>

#include "sparsecut/tensor.hpp"
#include "sparsecut/transformer.hpp"

namespace sparsecut {

struct VitConfig {
  std::size_t layers = 24;
  std::size_t width = 1024;
  std::size_t heads = 16;
  double mlp_ratio = 4.0;

  void validate() const;
  [[nodiscard]] std::size_t hidden() const { return mlp_hidden_width(width, mlp_ratio); }
};

struct VitWeights {
  std::vector<TransformerBlockWeights> layers;

  static VitWeights random(const VitConfig& cfg, SeededRng& rng);
};

// states[0] is the embedded input; states[i] is the output of layer i. Every
// state is kept since any of them may feed a shortcut.
struct VitActivations {
  std::vector<Tensor> states;

  [[nodiscard]] std::size_t depth() const { return states.empty() ? 0 : states.size() - 1; }
  // Layer-i state of patch 0 (the low-resolution view), M_v x D_v.
  [[nodiscard]] Tensor low_res(std::size_t layer) const;
  // Layer-i states of patches 1..N-1 concatenated along tokens, or an empty
  // tensor when N == 1.
  [[nodiscard]] Tensor high_res(std::size_t layer) const;
};

// x is N x M_v x D_v; each patch sequence is encoded independently.
Tensor vit_layer(const Tensor& x, const TransformerBlockWeights& w, const VitConfig& cfg,
                 MacCounter* counter = nullptr);

VitActivations vit_forward(const Tensor& x0, const VitWeights& weights, const VitConfig& cfg,
                           MacCounter* counter = nullptr);

}  // namespace sparsecut

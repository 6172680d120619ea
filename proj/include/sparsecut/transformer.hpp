#pragma once

#include <cstddef>

#include "sparsecut/tensor.hpp"

namespace sparsecut {

class SeededRng;

// Pre-norm transformer block shared by the encoder and the decoder:
//   h = x + Wo * MHSA(LN1(x) Wq, LN1(x) Wk, LN1(x) Wv)
//   y = h + GELU(LN2(h) W1 + b1) W2 + b2
struct TransformerBlockWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, wk, wv, wo;  // width x width, no bias
  Tensor ln2_gain, ln2_bias;
  Tensor mlp_in, mlp_in_bias;    // width x hidden, hidden
  Tensor mlp_out, mlp_out_bias;  // hidden x width, width

  [[nodiscard]] std::size_t width() const { return wq.rows(); }
  [[nodiscard]] std::size_t hidden() const { return mlp_in.cols(); }

  // Unit norms, zero biases, matrices ~ N(0, 1/fan_in).
  static TransformerBlockWeights random(std::size_t width, std::size_t hidden, SeededRng& rng);
  // Zeroes both residual branches' output projections, making the block the identity.
  void zero_output_projections();
};

// Separate tallies for the two sublayers; either may be null.
struct BlockCounters {
  MacCounter* attention = nullptr;
  MacCounter* mlp = nullptr;
};

// MLP hidden width for a given model width and expansion ratio.
[[nodiscard]] std::size_t mlp_hidden_width(std::size_t width, double mlp_ratio);

Tensor transformer_block(const Tensor& x, const TransformerBlockWeights& w, std::size_t heads,
                         bool causal, BlockCounters counters = {});

}  // namespace sparsecut

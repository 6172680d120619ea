#include "sparsecut/transformer.hpp"

#include <cmath>

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

namespace {

Tensor scaled_randn(std::size_t rows, std::size_t cols, SeededRng& rng) {
  return Tensor::randn({rows, cols}, rng, 1.0 / std::sqrt(static_cast<double>(rows)));
}

}  // namespace

TransformerBlockWeights TransformerBlockWeights::random(std::size_t width, std::size_t hidden,
                                                        SeededRng& rng) {
  TransformerBlockWeights w;
  w.ln1_gain = Tensor::filled({width}, 1.0);
  w.ln1_bias = Tensor::zeros({width});
  w.wq = scaled_randn(width, width, rng);
  w.wk = scaled_randn(width, width, rng);
  w.wv = scaled_randn(width, width, rng);
  w.wo = scaled_randn(width, width, rng);
  w.ln2_gain = Tensor::filled({width}, 1.0);
  w.ln2_bias = Tensor::zeros({width});
  w.mlp_in = scaled_randn(width, hidden, rng);
  w.mlp_in_bias = Tensor::zeros({hidden});
  w.mlp_out = scaled_randn(hidden, width, rng);
  w.mlp_out_bias = Tensor::zeros({width});
  return w;
}

void TransformerBlockWeights::zero_output_projections() {
  wo = Tensor::zeros(wo.shape());
  mlp_out = Tensor::zeros(mlp_out.shape());
  mlp_out_bias = Tensor::zeros(mlp_out_bias.shape());
}

std::size_t mlp_hidden_width(std::size_t width, double mlp_ratio) {
  if (!(mlp_ratio > 0.0)) throw ConfigError("mlp_ratio must be positive");
  const auto hidden = static_cast<std::size_t>(std::llround(static_cast<double>(width) * mlp_ratio));
  return hidden == 0 ? 1 : hidden;
}

Tensor transformer_block(const Tensor& x, const TransformerBlockWeights& w, std::size_t heads,
                         bool causal, BlockCounters counters) {
  if (x.rank() != 2 || x.cols() != w.width()) {
    throw DimensionError("transformer_block: input " + shape_to_string(x.shape()) +
                         " does not match width " + std::to_string(w.width()));
  }
  if (x.rows() == 0) return x;
  const Tensor normed = layer_norm(x, w.ln1_gain, w.ln1_bias);
  const Tensor q = matmul(normed, w.wq, counters.attention);
  const Tensor k = matmul(normed, w.wk, counters.attention);
  const Tensor v = matmul(normed, w.wv, counters.attention);
  const Tensor mixed = multi_head_attention(q, k, v, heads, causal, counters.attention);
  Tensor h = add(x, matmul(mixed, w.wo, counters.attention));

  const Tensor normed2 = layer_norm(h, w.ln2_gain, w.ln2_bias);
  const Tensor hidden = gelu(add_row_vector(matmul(normed2, w.mlp_in, counters.mlp), w.mlp_in_bias));
  add_inplace(h, add_row_vector(matmul(hidden, w.mlp_out, counters.mlp), w.mlp_out_bias));
  return h;
}

}  // namespace sparsecut

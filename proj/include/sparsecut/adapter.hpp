#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sparsecut/tensor.hpp"

namespace sparsecut {

class SeededRng;

struct AdapterConfig {
  std::size_t vit_width = 1024;  // D_v
  std::size_t llm_width = 4096;  // D_t
  std::size_t heads = 1;
  std::size_t hidden = 0;  // MLP width; 0 means 4 * D_v
  bool residual = true;    // Y = x_low + attention(...) when set

  [[nodiscard]] std::size_t mlp_hidden() const { return hidden ? hidden : 4 * vit_width; }
  void validate() const;
};

// Two-layer GELU MLP from the encoder width to the decoder width.
struct Projector {
  Tensor w_in, b_in;    // D_v x H, H
  Tensor w_out, b_out;  // H x D_t, D_t

  static Projector random(std::size_t in, std::size_t hidden, std::size_t out, SeededRng& rng);
};

// GELU(x W_in + b_in) W_out + b_out, row by row. Used on its own as the
// concatenation-fusion projector.
Tensor project_tokens(const Tensor& x, const Projector& p, MacCounter* counter = nullptr);

// One modality adapter: attention with low-resolution queries over
// high-resolution keys/values (self-attention when no high-resolution tokens
// are given), a residual on the query side, then LayerNorm and the MLP.
struct AdapterBlock {
  Tensor wq, wk, wv, wo;  // D_v x D_v
  Tensor ln_gain, ln_bias;
  Projector mlp;
  std::size_t heads = 1;
  bool residual = true;

  [[nodiscard]] std::size_t vit_width() const { return wq.rows(); }
  [[nodiscard]] std::size_t llm_width() const { return mlp.w_out.cols(); }

  static AdapterBlock random(const AdapterConfig& cfg, SeededRng& rng);

  // Named views of every trainable tensor, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
};

struct FusedVisualTokens {
  Tensor z;  // M_v x D_t
  std::size_t source_vit_layer = 0;
};

// Intermediates of one fuse call. Consumed by exactly one fuse_backward.
struct AdapterCache {
  const AdapterBlock* block = nullptr;
  bool consumed = false;
  bool cross = false;  // keys/values came from x_high
  Tensor x_low, kv_source;
  Tensor q, k, v;
  std::vector<Tensor> probs;  // one M_v x K matrix per head
  Tensor mixed;               // concatenated head outputs, before W_o
  Tensor y;                   // residual output, before LayerNorm
  Tensor y_hat;               // normalized y before the affine gain/bias
  std::vector<double> inv_std;
  Tensor normed;  // LN(y)
  Tensor pre_act, act;
};

FusedVisualTokens fuse(const Tensor& x_low, const std::optional<Tensor>& x_high,
                       const AdapterBlock& block, std::size_t source_vit_layer = 0,
                       MacCounter* counter = nullptr, AdapterCache* cache = nullptr);

struct AdapterGradients {
  Tensor x_low;
  Tensor x_high;  // empty when the forward ran self-attention
  AdapterBlock block;
};

// Exact gradients of sum(grad_z * z) through the cached forward. Throws
// UsageError if the cache was already consumed or belongs to another block.
AdapterGradients fuse_backward(const Tensor& grad_z, AdapterCache& cache,
                               const AdapterBlock& block);

}  // namespace sparsecut

#include "sparsecut/adapter.hpp"

#include <cmath>

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

namespace {

Tensor scaled_randn(std::size_t rows, std::size_t cols, SeededRng& rng) {
  return Tensor::randn({rows, cols}, rng, 1.0 / std::sqrt(static_cast<double>(rows)));
}

Tensor zeros_like(const Tensor& t) { return Tensor::zeros(t.shape()); }

}  // namespace

void AdapterConfig::validate() const {
  if (vit_width == 0 || llm_width == 0) throw ConfigError("adapter widths must be positive");
  if (heads == 0 || vit_width % heads != 0) {
    throw ConfigError("adapter width " + std::to_string(vit_width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

Projector Projector::random(std::size_t in, std::size_t hidden, std::size_t out, SeededRng& rng) {
  Projector p;
  p.w_in = scaled_randn(in, hidden, rng);
  p.b_in = Tensor::zeros({hidden});
  p.w_out = scaled_randn(hidden, out, rng);
  p.b_out = Tensor::zeros({out});
  return p;
}

Tensor project_tokens(const Tensor& x, const Projector& p, MacCounter* counter) {
  const Tensor hidden = gelu(add_row_vector(matmul(x, p.w_in, counter), p.b_in));
  return add_row_vector(matmul(hidden, p.w_out, counter), p.b_out);
}

AdapterBlock AdapterBlock::random(const AdapterConfig& cfg, SeededRng& rng) {
  cfg.validate();
  AdapterBlock b;
  b.wq = scaled_randn(cfg.vit_width, cfg.vit_width, rng);
  b.wk = scaled_randn(cfg.vit_width, cfg.vit_width, rng);
  b.wv = scaled_randn(cfg.vit_width, cfg.vit_width, rng);
  b.wo = scaled_randn(cfg.vit_width, cfg.vit_width, rng);
  b.ln_gain = Tensor::filled({cfg.vit_width}, 1.0);
  b.ln_bias = Tensor::zeros({cfg.vit_width});
  b.mlp = Projector::random(cfg.vit_width, cfg.mlp_hidden(), cfg.llm_width, rng);
  b.heads = cfg.heads;
  b.residual = cfg.residual;
  return b;
}

std::vector<std::pair<std::string, Tensor*>> AdapterBlock::parameters() {
  return {{"wq", &wq},         {"wk", &wk},           {"wv", &wv},
          {"wo", &wo},         {"ln_gain", &ln_gain}, {"ln_bias", &ln_bias},
          {"mlp_in", &mlp.w_in}, {"mlp_in_bias", &mlp.b_in}, {"mlp_out", &mlp.w_out},
          {"mlp_out_bias", &mlp.b_out}};
}

std::vector<std::pair<std::string, const Tensor*>> AdapterBlock::parameters() const {
  return {{"wq", &wq},         {"wk", &wk},           {"wv", &wv},
          {"wo", &wo},         {"ln_gain", &ln_gain}, {"ln_bias", &ln_bias},
          {"mlp_in", &mlp.w_in}, {"mlp_in_bias", &mlp.b_in}, {"mlp_out", &mlp.w_out},
          {"mlp_out_bias", &mlp.b_out}};
}

FusedVisualTokens fuse(const Tensor& x_low, const std::optional<Tensor>& x_high,
                       const AdapterBlock& block, std::size_t source_vit_layer,
                       MacCounter* counter, AdapterCache* cache) {
  const std::size_t width = block.vit_width();
  if (x_low.rank() != 2 || x_low.cols() != width) {
    throw DimensionError("fuse: low-resolution tokens " + shape_to_string(x_low.shape()) +
                         " do not match adapter width " + std::to_string(width));
  }
  const bool cross = x_high.has_value();
  if (cross && (x_high->rank() != 2 || x_high->cols() != width || x_high->rows() == 0)) {
    throw DimensionError("fuse: high-resolution tokens " + shape_to_string(x_high->shape()) +
                         " do not match adapter width " + std::to_string(width));
  }
  const Tensor& source = cross ? *x_high : x_low;

  Tensor q = matmul(x_low, block.wq, counter);
  Tensor k = matmul(source, block.wk, counter);
  Tensor v = matmul(source, block.wv, counter);
  std::vector<Tensor> probs;
  Tensor mixed = multi_head_attention(q, k, v, block.heads, false, counter,
                                      cache ? &probs : nullptr);
  Tensor y = matmul(mixed, block.wo, counter);
  if (block.residual) add_inplace(y, x_low);

  const Tensor unit_gain = Tensor::filled({width}, 1.0);
  const Tensor zero_bias = Tensor::zeros({width});
  Tensor y_hat = layer_norm(y, unit_gain, zero_bias);
  Tensor normed(y_hat.shape());
  for (std::size_t r = 0; r < y_hat.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      normed(r, c) = y_hat(r, c) * block.ln_gain[c] + block.ln_bias[c];

  Tensor pre_act = add_row_vector(matmul(normed, block.mlp.w_in, counter), block.mlp.b_in);
  Tensor act = gelu(pre_act);
  Tensor z = add_row_vector(matmul(act, block.mlp.w_out, counter), block.mlp.b_out);

  if (cache) {
    AdapterCache& c = *cache;
    c.block = &block;
    c.consumed = false;
    c.cross = cross;
    c.x_low = x_low;
    c.kv_source = source;
    c.q = std::move(q);
    c.k = std::move(k);
    c.v = std::move(v);
    c.probs = std::move(probs);
    c.mixed = std::move(mixed);
    c.inv_std.assign(y.rows(), 0.0);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double mean = 0.0, var = 0.0;
      for (double x : y.row(r)) mean += x;
      mean /= static_cast<double>(width);
      for (double x : y.row(r)) var += (x - mean) * (x - mean);
      var /= static_cast<double>(width);
      c.inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    }
    c.y = std::move(y);
    c.y_hat = std::move(y_hat);
    c.normed = std::move(normed);
    c.pre_act = std::move(pre_act);
    c.act = std::move(act);
  }
  return {std::move(z), source_vit_layer};
}

AdapterGradients fuse_backward(const Tensor& grad_z, AdapterCache& cache,
                               const AdapterBlock& block) {
  if (cache.block != &block) throw UsageError("fuse_backward: cache belongs to a different block");
  if (cache.consumed) throw UsageError("fuse_backward: cache already consumed");
  if (grad_z.rank() != 2 || grad_z.rows() != cache.x_low.rows() ||
      grad_z.cols() != block.llm_width()) {
    throw UsageError("fuse_backward: gradient " + shape_to_string(grad_z.shape()) +
                     " does not match the cached forward");
  }
  cache.consumed = true;
  const std::size_t width = block.vit_width();
  const std::size_t rows = cache.x_low.rows();

  AdapterGradients g;
  g.block.heads = block.heads;
  g.block.residual = block.residual;

  // MLP.
  g.block.mlp.w_out = matmul(transpose(cache.act), grad_z);
  g.block.mlp.b_out = column_sums(grad_z);
  Tensor d_pre = matmul_transposed(grad_z, block.mlp.w_out);
  for (std::size_t i = 0; i < d_pre.size(); ++i) d_pre[i] *= gelu_grad(cache.pre_act[i]);
  g.block.mlp.w_in = matmul(transpose(cache.normed), d_pre);
  g.block.mlp.b_in = column_sums(d_pre);
  const Tensor d_normed = matmul_transposed(d_pre, block.mlp.w_in);

  // LayerNorm.
  g.block.ln_gain = Tensor::zeros({width});
  g.block.ln_bias = column_sums(d_normed);
  Tensor d_y({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double dxhat = d_normed(r, c) * block.ln_gain[c];
      g.block.ln_gain[c] += d_normed(r, c) * cache.y_hat(r, c);
      mean_dxhat += dxhat;
      mean_dxhat_xhat += dxhat * cache.y_hat(r, c);
    }
    mean_dxhat /= static_cast<double>(width);
    mean_dxhat_xhat /= static_cast<double>(width);
    for (std::size_t c = 0; c < width; ++c) {
      const double dxhat = d_normed(r, c) * block.ln_gain[c];
      d_y(r, c) = cache.inv_std[r] * (dxhat - mean_dxhat - cache.y_hat(r, c) * mean_dxhat_xhat);
    }
  }

  // Residual and output projection.
  g.x_low = block.residual ? d_y : Tensor::zeros({rows, width});
  g.block.wo = matmul(transpose(cache.mixed), d_y);
  const Tensor d_mixed = matmul_transposed(d_y, block.wo);

  // Attention, head by head.
  const std::size_t head_width = width / block.heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_width));
  Tensor d_q = zeros_like(cache.q);
  Tensor d_k = zeros_like(cache.k);
  Tensor d_v = zeros_like(cache.v);
  for (std::size_t h = 0; h < block.heads; ++h) {
    const std::size_t off = h * head_width;
    const Tensor& probs = cache.probs.at(h);
    const Tensor d_out = slice_cols(d_mixed, off, head_width);
    const Tensor v_h = slice_cols(cache.v, off, head_width);
    const Tensor q_h = slice_cols(cache.q, off, head_width);
    const Tensor k_h = slice_cols(cache.k, off, head_width);

    set_cols(d_v, off, matmul(transpose(probs), d_out));
    const Tensor d_probs = matmul_transposed(d_out, v_h);
    Tensor d_scores(probs.shape());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < probs.cols(); ++c) dot += d_probs(r, c) * probs(r, c);
      for (std::size_t c = 0; c < probs.cols(); ++c) {
        d_scores(r, c) = probs(r, c) * (d_probs(r, c) - dot) * inv_sqrt_d;
      }
    }
    set_cols(d_q, off, matmul(d_scores, k_h));
    set_cols(d_k, off, matmul(transpose(d_scores), q_h));
  }

  g.block.wq = matmul(transpose(cache.x_low), d_q);
  g.block.wk = matmul(transpose(cache.kv_source), d_k);
  g.block.wv = matmul(transpose(cache.kv_source), d_v);
  add_inplace(g.x_low, matmul_transposed(d_q, block.wq));
  Tensor d_source = add(matmul_transposed(d_k, block.wk), matmul_transposed(d_v, block.wv));
  if (cache.cross) {
    g.x_high = std::move(d_source);
  } else {
    add_inplace(g.x_low, d_source);
  }
  return g;
}

}  // namespace sparsecut

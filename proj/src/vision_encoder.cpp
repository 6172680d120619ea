#include "sparsecut/vision_encoder.hpp"

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

void VitConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder needs at least one layer");
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("encoder width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

VitWeights VitWeights::random(const VitConfig& cfg, SeededRng& rng) {
  cfg.validate();
  VitWeights w;
  w.layers.reserve(cfg.layers);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    SeededRng layer_rng = rng.split(i);
    w.layers.push_back(TransformerBlockWeights::random(cfg.width, cfg.hidden(), layer_rng));
  }
  return w;
}

Tensor VitActivations::low_res(std::size_t layer) const { return states.at(layer).slice(0); }

Tensor VitActivations::high_res(std::size_t layer) const {
  const Tensor& s = states.at(layer);
  if (s.dim(0) < 2) return Tensor({0, s.dim(2)});
  return flatten_slices(s, 1, s.dim(0));
}

Tensor vit_layer(const Tensor& x, const TransformerBlockWeights& w, const VitConfig& cfg,
                 MacCounter* counter) {
  if (x.rank() != 3 || x.dim(2) != cfg.width || w.width() != cfg.width) {
    throw UsageError("vit_layer: expected N x M_v x " + std::to_string(cfg.width) + ", got " +
                     shape_to_string(x.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    out.set_slice(n, transformer_block(x.slice(n), w, cfg.heads, false, {counter, counter}));
  }
  return out;
}

VitActivations vit_forward(const Tensor& x0, const VitWeights& weights, const VitConfig& cfg,
                           MacCounter* counter) {
  cfg.validate();
  if (weights.layers.size() != cfg.layers) {
    throw ConfigError("encoder has " + std::to_string(weights.layers.size()) +
                      " weight sets for " + std::to_string(cfg.layers) + " layers");
  }
  VitActivations acts;
  acts.states.reserve(cfg.layers + 1);
  acts.states.push_back(x0);
  for (const TransformerBlockWeights& w : weights.layers) {
    acts.states.push_back(vit_layer(acts.states.back(), w, cfg, counter));
  }
  return acts;
}

}  // namespace sparsecut

#include "vg3d/fusion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "vg3d/augment.hpp"

namespace vg3d {

const char* aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::kAttention:
      return "attention";
    case Aggregation::kMean:
      return "mean";
    case Aggregation::kMaxPool:
      return "maxpool";
  }
  return "?";
}

Aggregation aggregation_from_name(const std::string& name) {
  if (name == "attention") return Aggregation::kAttention;
  if (name == "mean") return Aggregation::kMean;
  if (name == "maxpool") return Aggregation::kMaxPool;
  throw std::invalid_argument("unknown aggregation mode '" + name +
                              "' (expected attention|mean|maxpool)");
}

TextSpatialFusion TextSpatialFusion::init(std::size_t d_model, std::size_t d_text,
                                          std::size_t n_heads, Rng& rng) {
  TextSpatialFusion f;
  f.attn = Attention::init(d_model, d_text, d_model, n_heads, rng);
  f.ff = FeedForward::init(d_model, rng);
  return f;
}

Tensor TextSpatialFusion::operator()(const Tensor& maps, const Tensor& text) const {
  Tensor x = layer_norm(add(maps, attn(maps, text)));
  return layer_norm(add(x, ff(x)));
}

void TextSpatialFusion::collect(ParamSet& ps, const std::string& prefix) const {
  attn.collect(ps, prefix + ".attn");
  ff.collect(ps, prefix + ".ff");
}

SpatialAggregate aggregate_spatial(const Tensor& objs, const Tensor& maps, const Tensor& ws,
                                   const Tensor& wf) {
  const std::size_t d = maps.dim(1);
  Tensor u = matmul(objs, ws);
  Tensor v = matmul(maps, wf);
  Tensor scores = pair_scores(u, v, 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor weights = masked_row_softmax(scores);
  return {weights, weighted_pair_sum(weights, maps)};
}

namespace {

std::size_t pair_count(const Tensor& maps) {
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(maps.dim(0)))));
  if (n < 2) throw std::invalid_argument("aggregate: need at least one anchor");
  return n;
}

Tensor uniform_offdiag_weights(std::size_t n) {
  std::vector<double> w(n * n, 0.0);
  const double u = 1.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) w[i * n + j] = u;
    }
  }
  return Tensor::from_data({n, n}, std::move(w));
}

}  // namespace

SpatialAggregate aggregate_spatial_mean(const Tensor& maps) {
  const std::size_t n = pair_count(maps);
  return {uniform_offdiag_weights(n), masked_pair_mean(maps)};
}

SpatialAggregate aggregate_spatial_maxpool(const Tensor& maps) {
  const std::size_t n = pair_count(maps);
  const std::size_t d = maps.dim(1);
  // Diagnostic weights: per-anchor share of won feature dimensions.
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t bj = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double val = maps.at((i * n + j) * d + k);
        if (val > best) {
          best = val;
          bj = j;
        }
      }
      w[i * n + bj] += 1.0 / static_cast<double>(d);
    }
  }
  return {Tensor::from_data({n, n}, std::move(w)), masked_pair_max(maps)};
}

FusionLayer FusionLayer::init(std::size_t d_model, std::size_t d_text, std::size_t n_heads,
                              Rng& rng) {
  FusionLayer l;
  l.text_obj = Attention::init(d_model, d_text, d_model, n_heads, rng);
  l.text_obj_ff = FeedForward::init(d_model, rng);
  l.inject = Linear::init(d_model, d_model, rng, true);
  const double s = 1.0 / std::sqrt(static_cast<double>(d_model));
  l.ws = Tensor::randn({d_model, d_model}, rng, s, true);
  l.wf = Tensor::randn({d_model, d_model}, rng, s, true);
  return l;
}

void FusionLayer::collect(ParamSet& ps, const std::string& prefix) const {
  text_obj.collect(ps, prefix + ".text_obj");
  text_obj_ff.collect(ps, prefix + ".text_obj_ff");
  inject.collect(ps, prefix + ".inject");
  ps.push_back({prefix + ".ws", ws});
  ps.push_back({prefix + ".wf", wf});
}

FusionModule FusionModule::init(std::size_t d_model, std::size_t d_text, std::size_t n_layers,
                                std::size_t n_heads, Aggregation mode, Rng& rng) {
  if (n_layers < 1) throw std::invalid_argument("FusionModule: need at least one layer");
  FusionModule m;
  m.mode = mode;
  for (std::size_t l = 0; l < n_layers; ++l) {
    m.layers.push_back(FusionLayer::init(d_model, d_text, n_heads, rng));
  }
  return m;
}

Tensor FusionModule::forward(const Tensor& objs, const std::vector<Tensor>& text_maps,
                             const Tensor& text, FusionDiagnostics* diag) const {
  if (text_maps.empty()) throw std::invalid_argument("FusionModule: no map views");
  std::vector<Tensor> per_view(text_maps.size(), objs);
  if (diag) diag->weights.assign(layers.size(), {});
  for (std::size_t t = 0; t < layers.size(); ++t) {
    const auto& layer = layers[t];
    for (std::size_t v = 0; v < text_maps.size(); ++v) {
      Tensor o = per_view[v];
      o = layer_norm(add(o, layer.text_obj(o, text)));
      o = layer_norm(add(o, layer.text_obj_ff(o)));
      Tensor m = layer.inject(add_anchor_rows(text_maps[v], o));
      SpatialAggregate agg;
      switch (mode) {
        case Aggregation::kAttention:
          agg = aggregate_spatial(o, m, layer.ws, layer.wf);
          break;
        case Aggregation::kMean:
          agg = aggregate_spatial_mean(m);
          break;
        case Aggregation::kMaxPool:
          agg = aggregate_spatial_maxpool(m);
          break;
      }
      if (diag) diag->weights[t].push_back(agg.weights.values());
      per_view[v] = layer_norm(add(o, agg.aggregate));
    }
  }
  return aggregate_views(per_view);
}

void FusionModule::collect(ParamSet& ps, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].collect(ps, prefix + ".layer" + std::to_string(l));
  }
}

}  // namespace vg3d

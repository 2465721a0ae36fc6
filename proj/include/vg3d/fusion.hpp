#pragma once

#include <vector>

#include "vg3d/nn.hpp"
#include "vg3d/tensor.hpp"

namespace vg3d {

enum class Aggregation { kAttention, kMean, kMaxPool };

const char* aggregation_name(Aggregation a);
Aggregation aggregation_from_name(const std::string& name);

// Cross-attention + feedforward block fusing text into the projected
// spatial maps, applied once before the fusion stack.
struct TextSpatialFusion {
  Attention attn;  // map rows attend over text tokens
  FeedForward ff;

  static TextSpatialFusion init(std::size_t d_model, std::size_t d_text, std::size_t n_heads,
                                Rng& rng);
  Tensor operator()(const Tensor& maps, const Tensor& text) const;  // [(n*n), d]
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// Per-anchor aggregation weights and the aggregate; weights row i sums to 1
// over anchors j != i.
struct SpatialAggregate {
  Tensor weights;    // [n, n]
  Tensor aggregate;  // [n, d]
};

// Attention-based anchor aggregation: score[i][j] =
// (ws . obj[i]) . (wf . maps[i][j]) / sqrt(d), softmax over j != i.
SpatialAggregate aggregate_spatial(const Tensor& objs, const Tensor& maps, const Tensor& ws,
                                   const Tensor& wf);
SpatialAggregate aggregate_spatial_mean(const Tensor& maps);
SpatialAggregate aggregate_spatial_maxpool(const Tensor& maps);

// One fusion layer: text-object fusion, object-spatial fusion, anchor
// aggregation, residual enhancement.
struct FusionLayer {
  Attention text_obj;
  FeedForward text_obj_ff;
  Linear inject;  // object-to-map injection
  Tensor ws, wf;  // score matrices, [d, d]

  static FusionLayer init(std::size_t d_model, std::size_t d_text, std::size_t n_heads, Rng& rng);
  void collect(ParamSet& ps, const std::string& prefix) const;
};

struct FusionDiagnostics {
  // weights[layer][view] holds the row-major n x n aggregation weights
  std::vector<std::vector<std::vector<double>>> weights;
};

struct FusionModule {
  std::vector<FusionLayer> layers;
  Aggregation mode = Aggregation::kAttention;

  static FusionModule init(std::size_t d_model, std::size_t d_text, std::size_t n_layers,
                           std::size_t n_heads, Aggregation mode, Rng& rng);

  // objs: [n, d] shared across views at entry; text_maps: one [(n*n), d]
  // tensor per rotation view; text: [L, d_text]. Returns the view-mean
  // final object features [n, d].
  Tensor forward(const Tensor& objs, const std::vector<Tensor>& text_maps, const Tensor& text,
                 FusionDiagnostics* diag = nullptr) const;

  void collect(ParamSet& ps, const std::string& prefix) const;
};

}  // namespace vg3d

#pragma once

#include <vector>

#include "vg3d/nn.hpp"
#include "vg3d/scene.hpp"
#include "vg3d/tensor.hpp"

namespace vg3d {

// Permutation-invariant point-set encoder: per-point MLP, max-pool over
// points, then an MLP to model width.
struct PointEncoder {
  Linear pre1;   // 6 -> d
  Linear pre2;   // d -> d
  Linear post1;  // d -> d
  Linear post2;  // d -> d

  static PointEncoder init(std::size_t d_model, Rng& rng);
  // points: [n_objects * points_per_object, 6]; returns [n_objects, d].
  Tensor operator()(const Tensor& points, std::size_t n_objects) const;
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// Builds the flat point tensor for a scene, optionally with color
// augmentation applied per point.
Tensor scene_points_tensor(const Scene& scene);

struct SceneAttentionOut {
  Tensor attended;  // [n, d] weighted sum of values
  Tensor weights;   // [n, n] rows sum to 1
};

// Self-attention over object features with unscaled dot-product logits:
// out_i = sum_j softmax_j(q_i . k_j) v_j.
SceneAttentionOut scene_attention(const Tensor& objs, const Tensor& wq, const Tensor& wk,
                                  const Tensor& wv);

// Stack of scene-attention layers, each wrapped in a residual connection
// and layer normalization.
struct SceneAwareEncoder {
  struct Layer {
    Tensor wq, wk, wv;
  };
  std::vector<Layer> layers;

  static SceneAwareEncoder init(std::size_t d_model, std::size_t n_layers, Rng& rng);
  Tensor operator()(const Tensor& objs) const;
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// Token embedding + sinusoidal positions + self-attention layers. Row 0 of
// the output is the classification-token feature.
struct TextEncoder {
  Tensor embed;  // [vocab, d_text]
  struct Layer {
    Attention attn;
    FeedForward ff;
  };
  std::vector<Layer> layers;

  static TextEncoder init(std::size_t vocab_size, std::size_t d_text, std::size_t n_layers,
                          std::size_t n_heads, Rng& rng);
  Tensor operator()(const std::vector<std::size_t>& tokens) const;  // [L, d_text]
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// MLP head from the classification-token feature to category logits.
struct TextCategoryHead {
  Linear l1;  // d_text -> d_text
  Linear l2;  // d_text -> n_categories

  static TextCategoryHead init(std::size_t d_text, std::size_t n_categories, Rng& rng);
  Tensor operator()(const Tensor& cls) const;  // [d_text] -> [n_categories]
  void collect(ParamSet& ps, const std::string& prefix) const;
};

}  // namespace vg3d

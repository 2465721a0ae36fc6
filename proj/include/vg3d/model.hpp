#pragma once

#include <cstddef>

#include "vg3d/augment.hpp"
#include "vg3d/checkpoint.hpp"
#include "vg3d/encoders.hpp"
#include "vg3d/fusion.hpp"
#include "vg3d/scene.hpp"
#include "vg3d/scoring.hpp"
#include "vg3d/spatial.hpp"

namespace vg3d {

struct ModelConfig {
  std::size_t n_categories = 8;
  std::size_t vocab_size = 16;
  std::size_t d_model = 64;
  std::size_t d_text = 64;
  std::size_t n_heads = 1;
  std::size_t sa_layers = 2;      // scene-aware encoder depth; 0 disables it
  std::size_t text_layers = 2;
  std::size_t fusion_layers = 3;
  std::size_t n_rotations = 4;
  Aggregation aggregation = Aggregation::kAttention;
  double lambda = 1.0;  // category-score weight in the late fusion
  double mu = 1.0;      // spatial-score weight

  void validate() const;
};

struct ModelOutput {
  Tensor text_logits;     // [n_categories]
  Tensor cat_scores_raw;  // [n, n_categories] before the scene-aware encoder
  Tensor cat_scores_sa;   // [n, n_categories] after it
  Tensor fused_objects;   // [n, d] view-aggregated output of the fusion stack
  Tensor target_scores;   // [n] gathered at the text-predicted category
  Tensor spatial_logits;  // [n]
  Tensor fused;           // [n] final prediction scores
  std::size_t predicted_category = 0;
  FusionDiagnostics diagnostics;  // filled when requested
};

// Object features are encoded once from centroid-relative points; the
// rotation views exist in the anchor-offset maps, which the fusion stack
// consumes per view before the mean view aggregation.
class GroundingModel {
 public:
  GroundingModel(const ModelConfig& cfg, Rng& rng);

  ModelOutput forward(const GroundingSample& sample, bool collect_attention = false) const;

  ParamSet params();
  const ModelConfig& config() const { return cfg_; }
  Aggregation aggregation() const { return fusion_.mode; }
  void set_aggregation(Aggregation a) { fusion_.mode = a; }

  Checkpoint snapshot();
  void restore(const Checkpoint& ckpt);

 private:
  ModelConfig cfg_;
  ViewSet views_;
  PointEncoder point_enc_;
  SceneAwareEncoder scene_enc_;
  TextEncoder text_enc_;
  TextCategoryHead text_head_;
  SpatialProjector projector_;
  TextSpatialFusion text_spatial_;
  FusionModule fusion_;
  CategoryClassifier classifier_;
  SpatialScoreHead spatial_head_;
};

}  // namespace vg3d

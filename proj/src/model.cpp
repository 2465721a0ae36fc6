#include "vg3d/model.hpp"

#include <stdexcept>

namespace vg3d {

void ModelConfig::validate() const {
  if (n_categories < 2) throw std::invalid_argument("config: n_categories must be >= 2");
  if (vocab_size < 2) throw std::invalid_argument("config: vocab_size must be >= 2");
  if (d_model < kSpatialFeatureDim) {
    throw std::invalid_argument("config: d_model must be >= " +
                                std::to_string(kSpatialFeatureDim));
  }
  if (n_heads == 0 || d_model % n_heads != 0 || d_text % n_heads != 0) {
    throw std::invalid_argument("config: head count must divide d_model and d_text");
  }
  if (text_layers < 1) throw std::invalid_argument("config: text_layers must be >= 1");
  if (fusion_layers < 1) throw std::invalid_argument("config: fusion_layers must be >= 1");
  if (n_rotations < 1) throw std::invalid_argument("config: n_rotations must be >= 1");
  if (lambda < 0.0 || mu < 0.0) throw std::invalid_argument("config: fusion weights must be >= 0");
}

GroundingModel::GroundingModel(const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      views_(ViewSet::of(cfg.n_rotations)),
      point_enc_(PointEncoder::init(cfg.d_model, rng)),
      scene_enc_(SceneAwareEncoder::init(cfg.d_model, cfg.sa_layers, rng)),
      text_enc_(TextEncoder::init(cfg.vocab_size, cfg.d_text, cfg.text_layers, cfg.n_heads, rng)),
      text_head_(TextCategoryHead::init(cfg.d_text, cfg.n_categories, rng)),
      projector_(SpatialProjector::init(cfg.d_model, rng)),
      text_spatial_(TextSpatialFusion::init(cfg.d_model, cfg.d_text, cfg.n_heads, rng)),
      fusion_(FusionModule::init(cfg.d_model, cfg.d_text, cfg.fusion_layers, cfg.n_heads,
                                 cfg.aggregation, rng)),
      classifier_(CategoryClassifier::init(cfg.d_model, cfg.n_categories, rng)),
      spatial_head_(SpatialScoreHead::init(cfg.d_model, rng)) {
  cfg.validate();
}

ModelOutput GroundingModel::forward(const GroundingSample& sample, bool collect_attention) const {
  const Scene& scene = sample.scene;
  if (scene.size() < 2) {
    throw std::invalid_argument("forward: scene needs at least 2 objects");
  }

  ModelOutput out;

  Tensor text = text_enc_(sample.tokens);
  out.text_logits = text_head_(select_row(text, 0));

  Tensor objs = point_enc_(scene_points_tensor(scene), scene.size());
  Tensor objs_sa = scene_enc_(objs);
  out.cat_scores_raw = classifier_(objs);
  out.cat_scores_sa = classifier_(objs_sa);

  std::vector<std::array<double, 3>> centroids;
  centroids.reserve(scene.size());
  for (const auto& o : scene.objects) centroids.push_back(o.centroid);
  const SpatialMaps raw = build_spatial_maps(centroids);
  std::vector<Tensor> text_maps;
  text_maps.reserve(views_.n_views);
  for (const auto& view : augment_maps_rotations(raw, views_)) {
    text_maps.push_back(text_spatial_(projector_(spatial_feature_augment(view)), text));
  }
  out.fused_objects =
      fusion_.forward(objs_sa, text_maps, text, collect_attention ? &out.diagnostics : nullptr);

  out.target_scores = extract_target_scores(out.cat_scores_sa, out.text_logits);
  out.predicted_category = argmax_index(out.text_logits.values());
  out.spatial_logits = spatial_head_(out.fused_objects);
  out.fused = fuse_predictions(out.target_scores, out.spatial_logits, cfg_.lambda, cfg_.mu);
  return out;
}

ParamSet GroundingModel::params() {
  ParamSet ps;
  point_enc_.collect(ps, "point");
  scene_enc_.collect(ps, "scene_aware");
  text_enc_.collect(ps, "text");
  text_head_.collect(ps, "text_head");
  projector_.collect(ps, "spatial_proj");
  text_spatial_.collect(ps, "text_spatial");
  fusion_.collect(ps, "fusion");
  classifier_.collect(ps, "classifier");
  spatial_head_.collect(ps, "spatial_head");
  return ps;
}

Checkpoint GroundingModel::snapshot() {
  Checkpoint ckpt;
  for (const auto& p : params()) {
    ckpt[p.name] = CheckpointEntry{p.tensor.shape(), p.tensor.values()};
  }
  return ckpt;
}

void GroundingModel::restore(const Checkpoint& ckpt) {
  for (auto& p : params()) {
    auto it = ckpt.find(p.name);
    if (it == ckpt.end()) {
      throw std::runtime_error("restore: checkpoint is missing parameter " + p.name);
    }
    if (it->second.shape != p.tensor.shape()) {
      throw std::runtime_error("restore: shape mismatch for " + p.name + ": checkpoint " +
                               shape_str(it->second.shape) + " vs model " +
                               shape_str(p.tensor.shape()));
    }
    p.tensor.leaf_values() = it->second.data;
  }
}

}  // namespace vg3d

#pragma once

#include <cstddef>
#include <vector>

#include "vg3d/nn.hpp"
#include "vg3d/tensor.hpp"

namespace vg3d {

// Shared MLP scoring every object against every category.
struct CategoryClassifier {
  Linear l1;  // d -> d
  Linear l2;  // d -> n_categories

  static CategoryClassifier init(std::size_t d_model, std::size_t n_categories, Rng& rng);
  Tensor operator()(const Tensor& objs) const;  // [n, d] -> [n, n_categories]
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// Shared linear head from fused object features to one spatial logit each.
struct SpatialScoreHead {
  Linear lin;  // d -> 1

  static SpatialScoreHead init(std::size_t d_model, Rng& rng);
  Tensor operator()(const Tensor& objs) const;  // [n, d] -> [n]
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// argmax with the lowest index winning ties.
std::size_t argmax_index(const std::vector<double>& v);

// Column of the category score matrix selected by the text branch's argmax
// category.
Tensor extract_target_scores(const Tensor& category_matrix, const Tensor& text_logits);

// Zero-mean, unit-population-variance transform; zeros when the deviation
// is degenerate. Requires at least two logits.
Tensor normalize_logits(const Tensor& logits);

// P = lambda * g(detach(f1)) + mu * g(f2). The category branch enters
// through a stop-gradient so reference losses never update it.
Tensor fuse_predictions(const Tensor& f1, const Tensor& f2, double lambda, double mu);

}  // namespace vg3d

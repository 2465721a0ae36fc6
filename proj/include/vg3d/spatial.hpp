#pragma once

#include <array>
#include <vector>

#include "vg3d/augment.hpp"
#include "vg3d/nn.hpp"
#include "vg3d/tensor.hpp"

namespace vg3d {

// Per-pair features: unit planar direction, scaled height, scaled planar
// distance.
constexpr std::size_t kSpatialFeatureDim = 4;  // x*, y*, z*, d*

// One set of anchor-relative offset maps: entry (i, j) holds the offset of
// object j from object i; the diagonal is zero.
struct SpatialMaps {
  std::size_t n = 0;
  std::vector<std::array<double, 3>> offsets;  // row-major, n*n entries

  const std::array<double, 3>& at(std::size_t i, std::size_t j) const {
    return offsets[i * n + j];
  }
};

SpatialMaps build_spatial_maps(const std::vector<std::array<double, 3>>& centroids);

// One rotated copy of the maps per view angle.
std::vector<SpatialMaps> augment_maps_rotations(const SpatialMaps& maps, const ViewSet& views);

// (n*n) x 4 constant feature tensor; diagonal rows are zero. Height and
// distance are scaled per map: the height range and the farthest planar
// anchor within map i both normalize to 1.
Tensor spatial_feature_augment(const SpatialMaps& maps);

// Shared two-layer perceptron lifting per-pair features to model width.
struct SpatialProjector {
  Linear lin1;  // 4 -> d
  Linear lin2;  // d -> d

  static SpatialProjector init(std::size_t d_model, Rng& rng);
  Tensor operator()(const Tensor& features) const;
  void collect(ParamSet& ps, const std::string& prefix) const;
};

}  // namespace vg3d

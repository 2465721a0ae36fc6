#include "vg3d/spatial.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vg3d {

SpatialMaps build_spatial_maps(const std::vector<std::array<double, 3>>& centroids) {
  const std::size_t n = centroids.size();
  if (n < 2) {
    throw std::invalid_argument("build_spatial_maps: need at least 2 objects, got " +
                                std::to_string(n));
  }
  SpatialMaps maps;
  maps.n = n;
  maps.offsets.assign(n * n, {0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      maps.offsets[i * n + j] = {centroids[j][0] - centroids[i][0],
                                 centroids[j][1] - centroids[i][1],
                                 centroids[j][2] - centroids[i][2]};
    }
  }
  return maps;
}

std::vector<SpatialMaps> augment_maps_rotations(const SpatialMaps& maps, const ViewSet& views) {
  std::vector<SpatialMaps> out;
  out.reserve(views.n_views);
  for (double theta : views.angles) {
    SpatialMaps rotated;
    rotated.n = maps.n;
    rotated.offsets.reserve(maps.offsets.size());
    for (const auto& off : maps.offsets) rotated.offsets.push_back(rotate_point(off, theta));
    out.push_back(std::move(rotated));
  }
  return out;
}

Tensor spatial_feature_augment(const SpatialMaps& maps) {
  const std::size_t n = maps.n;
  if (n < 2) throw std::invalid_argument("spatial_feature_augment: need at least 2 objects");
  std::vector<double> feats(n * n * kSpatialFeatureDim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double z_min = std::numeric_limits<double>::infinity();
    double z_max = -std::numeric_limits<double>::infinity();
    double d_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto& off = maps.at(i, j);
      z_min = std::min(z_min, off[2]);
      z_max = std::max(z_max, off[2]);
      d_max = std::max(d_max, std::hypot(off[0], off[1]));
    }
    const double z_range = z_max - z_min;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto& off = maps.at(i, j);
      double* f = feats.data() + (i * n + j) * kSpatialFeatureDim;
      const double d = std::hypot(off[0], off[1]);
      if (d > 0.0) {
        f[0] = off[0] / d;
        f[1] = off[1] / d;
      }
      // stacked objects keep the zero "no planar direction" code
      f[2] = z_range > 1e-12 ? off[2] / z_range : 0.0;
      f[3] = d_max > 1e-12 ? d / d_max : 0.0;
    }
  }
  return Tensor::from_data({n * n, kSpatialFeatureDim}, std::move(feats));
}

SpatialProjector SpatialProjector::init(std::size_t d_model, Rng& rng) {
  if (d_model < kSpatialFeatureDim) {
    throw std::invalid_argument("SpatialProjector: model width must be >= " +
                                std::to_string(kSpatialFeatureDim));
  }
  SpatialProjector p;
  p.lin1 = Linear::init(kSpatialFeatureDim, d_model, rng, true);
  p.lin2 = Linear::init(d_model, d_model, rng, true);
  return p;
}

Tensor SpatialProjector::operator()(const Tensor& features) const {
  return lin2(relu(lin1(features)));
}

void SpatialProjector::collect(ParamSet& ps, const std::string& prefix) const {
  lin1.collect(ps, prefix + ".lin1");
  lin2.collect(ps, prefix + ".lin2");
}

}  // namespace vg3d

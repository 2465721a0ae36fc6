#include "vg3d/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vg3d {

std::vector<double> rotation_angles(std::size_t n_views) {
  if (n_views == 0) throw std::invalid_argument("rotation_angles: need at least one view");
  std::vector<double> angles;
  angles.reserve(n_views);
  for (std::size_t j = 1; j <= n_views; ++j) {
    angles.push_back(static_cast<double>(j) * 2.0 * std::numbers::pi /
                     static_cast<double>(n_views));
  }
  return angles;
}

ViewSet ViewSet::of(std::size_t n_views) { return ViewSet{n_views, rotation_angles(n_views)}; }

std::array<double, 3> augment_color(const std::array<double, 3>& rgb, Rng& rng,
                                    const ColorAugmentConfig& cfg) {
  const double alpha = rng.uniform(cfg.alpha_min, cfg.alpha_max);
  std::array<double, 3> out;
  for (int c = 0; c < 3; ++c) {
    const double noise = cfg.noise_sigma > 0.0 ? rng.normal(0.0, cfg.noise_sigma) : 0.0;
    out[c] = std::clamp(alpha * rgb[c] + noise, 0.0, 1.0);
  }
  return out;
}

std::array<double, 3> rotate_point(const std::array<double, 3>& p, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]};
}

std::vector<std::array<double, 3>> rotate_points(const std::vector<std::array<double, 3>>& pts,
                                                 double theta) {
  std::vector<std::array<double, 3>> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(rotate_point(p, theta));
  return out;
}

Tensor aggregate_views(const std::vector<Tensor>& views) {
  if (views.empty()) throw std::invalid_argument("aggregate_views: empty view list");
  return mean_of(views);
}

Scene augment_scene_colors(const Scene& scene, Rng& rng, const ColorAugmentConfig& cfg) {
  Scene out = scene;
  for (auto& obj : out.objects) {
    for (auto& p : obj.points) {
      const auto rgb = augment_color({p[3], p[4], p[5]}, rng, cfg);
      p[3] = rgb[0];
      p[4] = rgb[1];
      p[5] = rgb[2];
    }
  }
  return out;
}

}  // namespace vg3d

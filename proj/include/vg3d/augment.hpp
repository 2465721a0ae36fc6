#pragma once

#include <array>
#include <vector>

#include "vg3d/rng.hpp"
#include "vg3d/scene.hpp"
#include "vg3d/tensor.hpp"

namespace vg3d {

// The rotation views applied to object locations: angles j*2pi/n for
// j = 1..n, about the vertical axis.
struct ViewSet {
  std::size_t n_views;
  std::vector<double> angles;

  static ViewSet of(std::size_t n_views);
};

std::vector<double> rotation_angles(std::size_t n_views);

struct ColorAugmentConfig {
  double alpha_min = 0.5;
  double alpha_max = 1.5;
  double noise_sigma = 0.05;
};

// Per-point contrast scaling plus Gaussian channel noise, clamped to [0,1].
std::array<double, 3> augment_color(const std::array<double, 3>& rgb, Rng& rng,
                                    const ColorAugmentConfig& cfg = {});

// Rotation about the z axis; z is unchanged, norms are preserved.
std::array<double, 3> rotate_point(const std::array<double, 3>& p, double theta);
std::vector<std::array<double, 3>> rotate_points(const std::vector<std::array<double, 3>>& pts,
                                                 double theta);

// Arithmetic mean over per-view feature tensors; differentiable.
Tensor aggregate_views(const std::vector<Tensor>& views);

// Copy of the scene with augment_color applied to every point.
Scene augment_scene_colors(const Scene& scene, Rng& rng, const ColorAugmentConfig& cfg = {});

}  // namespace vg3d

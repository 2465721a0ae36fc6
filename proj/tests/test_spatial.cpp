#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vg3d/gradcheck.hpp"
#include "vg3d/spatial.hpp"

using namespace vg3d;

namespace {

// Dyadic-grid coordinates make float additions exact, so translation
// invariance can be asserted bit-for-bit.
std::vector<std::array<double, 3>> dyadic_centroids(Rng& rng, std::size_t n) {
  std::vector<std::array<double, 3>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({std::floor(rng.uniform(-2048, 2048)) / 1024.0,
                   std::floor(rng.uniform(-2048, 2048)) / 1024.0,
                   std::floor(rng.uniform(0, 2048)) / 1024.0});
  }
  return out;
}

}  // namespace

TEST_CASE("raw maps hold anchor offsets") {
  SpatialMaps m = build_spatial_maps({{0, 0, 0}, {1, 2, 3}});
  CHECK(m.at(0, 1) == std::array<double, 3>{1, 2, 3});
  CHECK(m.at(1, 0) == std::array<double, 3>{-1, -2, -3});
  CHECK(m.at(0, 0) == std::array<double, 3>{0, 0, 0});

  CHECK_THROWS_AS(build_spatial_maps({{0, 0, 0}}), std::invalid_argument);
}

TEST_CASE("maps are exactly translation invariant and antisymmetric") {
  Rng rng(21);
  for (int round = 0; round < 10; ++round) {
    auto pts = dyadic_centroids(rng, 5);
    const std::array<double, 3> t{std::floor(rng.uniform(-1024, 1024)) / 1024.0,
                                  std::floor(rng.uniform(-1024, 1024)) / 1024.0,
                                  std::floor(rng.uniform(-1024, 1024)) / 1024.0};
    auto shifted = pts;
    for (auto& p : shifted) {
      for (int a = 0; a < 3; ++a) p[a] += t[a];
    }
    SpatialMaps m0 = build_spatial_maps(pts);
    SpatialMaps m1 = build_spatial_maps(shifted);
    CHECK(m0.offsets == m1.offsets);  // exact

    for (std::size_t i = 0; i < m0.n; ++i) {
      for (std::size_t j = 0; j < m0.n; ++j) {
        for (int a = 0; a < 3; ++a) {
          CHECK(m0.at(i, j)[a] + m0.at(j, i)[a] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("maps match an explicit subtraction loop") {
  Rng rng(3);
  std::vector<std::array<double, 3>> pts;
  for (int i = 0; i < 3; ++i) {
    pts.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 2)});
  }
  SpatialMaps m = build_spatial_maps(pts);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      for (int a = 0; a < 3; ++a) {
        CHECK(m.at(i, j)[a] == doctest::Approx(pts[j][a] - pts[i][a]).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("single full-turn view leaves maps unchanged") {
  Rng rng(9);
  auto pts = dyadic_centroids(rng, 4);
  SpatialMaps m = build_spatial_maps(pts);
  auto views = augment_maps_rotations(m, ViewSet::of(1));
  REQUIRE(views.size() == 1);
  for (std::size_t e = 0; e < m.offsets.size(); ++e) {
    for (int a = 0; a < 3; ++a) {
      CHECK(views[0].offsets[e][a] == doctest::Approx(m.offsets[e][a]).epsilon(1e-12));
    }
  }
}

TEST_CASE("rotation preserves height") {
  SpatialMaps m;
  m.n = 2;
  m.offsets = {{0, 0, 0}, {1, 0, 5}, {-1, 0, -5}, {0, 0, 0}};
  auto views = augment_maps_rotations(m, ViewSet::of(4));
  // first view angle is pi/2: (1,0,5) -> (0,1,5)
  CHECK(views[0].offsets[1][0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(views[0].offsets[1][1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(views[0].offsets[1][2] == 5.0);
}

TEST_CASE("rotating the scene permutes the view axis") {
  Rng rng(33);
  const std::size_t n_views = 4;
  auto pts = dyadic_centroids(rng, 5);
  SpatialMaps base = build_spatial_maps(pts);
  auto base_views = augment_maps_rotations(base, ViewSet::of(n_views));

  auto rotated_pts = pts;
  const double delta = 2.0 * std::numbers::pi / n_views;
  for (auto& p : rotated_pts) p = rotate_point(p, delta);
  auto rot_views = augment_maps_rotations(build_spatial_maps(rotated_pts), ViewSet::of(n_views));

  // view k of the rotated scene equals view k+1 of the base scene
  for (std::size_t k = 0; k < n_views; ++k) {
    const auto& got = rot_views[k];
    const auto& expect = base_views[(k + 1) % n_views];
    for (std::size_t e = 0; e < got.offsets.size(); ++e) {
      for (int a = 0; a < 3; ++a) {
        CHECK(got.offsets[e][a] == doctest::Approx(expect.offsets[e][a]).epsilon(1e-9));
      }
    }
    // matched views also agree on the per-pair features
    Tensor fg = spatial_feature_augment(got);
    Tensor fe = spatial_feature_augment(expect);
    for (std::size_t i = 0; i < fg.size(); ++i) {
      CHECK(std::fabs(fg.at(i) - fe.at(i)) < 1e-9);
    }
  }
}

TEST_CASE("feature augmentation normalizes directions, heights, distances") {
  // target at origin, anchors forming a 3-4-5 triangle and a height spread
  SpatialMaps m = build_spatial_maps({{0, 0, 0}, {3, 4, -1}, {1, 0, 0}, {0, 2, 3}});
  Tensor f = spatial_feature_augment(m);
  const std::size_t n = 4;
  auto at = [&](std::size_t i, std::size_t j, std::size_t c) {
    return f.at((i * n + j) * kSpatialFeatureDim + c);
  };
  // direction of anchor 1 from target 0: (3,4)/5
  CHECK(at(0, 1, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(at(0, 1, 1) == doctest::Approx(0.8).epsilon(1e-12));
  // heights relative to object 0 are {-1, 0, 3}: range 4 -> {-0.25, 0, 0.75}
  CHECK(at(0, 1, 2) == doctest::Approx(-0.25).epsilon(1e-9));
  CHECK(at(0, 2, 2) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(at(0, 3, 2) == doctest::Approx(0.75).epsilon(1e-9));
  // farthest anchor in the row scales to 1
  CHECK(at(0, 1, 3) == doctest::Approx(1.0).epsilon(1e-9));

  Rng rng(6);
  for (int round = 0; round < 5; ++round) {
    std::vector<std::array<double, 3>> pts;
    for (int i = 0; i < 6; ++i) {
      pts.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 2)});
    }
    Tensor feats = spatial_feature_augment(build_spatial_maps(pts));
    for (std::size_t i = 0; i < 6; ++i) {
      double row_max = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        if (i == j) continue;
        const double x = feats.at((i * 6 + j) * 4 + 0);
        const double y = feats.at((i * 6 + j) * 4 + 1);
        CHECK(std::fabs(std::hypot(x, y) - 1.0) < 1e-9);
        row_max = std::max(row_max, feats.at((i * 6 + j) * 4 + 3));
      }
      CHECK(std::fabs(row_max - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("degenerate geometry falls back to zero codes") {
  // stacked objects: no planar direction, no distance spread
  SpatialMaps stacked = build_spatial_maps({{1, 1, 0}, {1, 1, 2}});
  Tensor f = spatial_feature_augment(stacked);
  CHECK(f.at(1 * kSpatialFeatureDim + 0) == 0.0);  // x*
  CHECK(f.at(1 * kSpatialFeatureDim + 1) == 0.0);  // y*
  CHECK(f.at(1 * kSpatialFeatureDim + 3) == 0.0);  // d*

  // equal heights: z* collapses to zero
  SpatialMaps flat = build_spatial_maps({{0, 0, 1}, {2, 0, 1}, {0, 3, 1}});
  Tensor g = spatial_feature_augment(flat);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(g.at((i * 3 + j) * kSpatialFeatureDim + 2) == 0.0);
    }
  }
}

TEST_CASE("projection shares weights and passes a gradient check") {
  Rng rng(41);
  SpatialProjector proj = SpatialProjector::init(8, rng);

  // zero weights and bias map zero features to zero
  SpatialProjector zeroed = proj;
  Rng rng2(42);
  zeroed.lin1 = Linear::init(kSpatialFeatureDim, 8, rng2);
  zeroed.lin2 = Linear::init(8, 8, rng2);
  for (auto& v : zeroed.lin1.w.leaf_values()) v = 0.0;
  for (auto& v : zeroed.lin2.w.leaf_values()) v = 0.0;
  Tensor zf = Tensor::zeros({4, kSpatialFeatureDim});
  for (double v : zeroed(zf).values()) CHECK(v == 0.0);

  // identical pair rows produce identical outputs
  Tensor feats = Tensor::from_data({2, 4}, {0.6, 0.8, 0.5, 1.0, 0.6, 0.8, 0.5, 1.0});
  Tensor out = proj(feats);
  for (std::size_t c = 0; c < 8; ++c) CHECK(out.at2(0, c) == out.at2(1, c));

  GradCheckCase c;
  c.name = "project_to_d";
  c.params.push_back({"f", Tensor::uniform({4, kSpatialFeatureDim}, rng, -1.0, 1.0, true)});
  proj.collect(c.params, "proj");
  c.build_loss = [proj](ParamSet& ps) { return sum_all(proj(ps[0].tensor)); };
  CHECK(finite_difference_error(c, 1e-5) < 1e-4);
}

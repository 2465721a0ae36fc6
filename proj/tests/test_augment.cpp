#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vg3d/augment.hpp"

using namespace vg3d;

TEST_CASE("rotation angles follow j*2pi/n") {
  const double pi = std::numbers::pi;
  auto four = rotation_angles(4);
  REQUIRE(four.size() == 4);
  CHECK(four[0] == doctest::Approx(pi / 2).epsilon(1e-15));
  CHECK(four[1] == doctest::Approx(pi).epsilon(1e-15));
  CHECK(four[2] == doctest::Approx(3 * pi / 2).epsilon(1e-15));
  CHECK(four[3] == doctest::Approx(2 * pi).epsilon(1e-15));

  auto one = rotation_angles(1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == doctest::Approx(2 * pi).epsilon(1e-15));

  auto two = rotation_angles(2);
  CHECK(two[0] == doctest::Approx(pi).epsilon(1e-15));
  CHECK(two[1] == doctest::Approx(2 * pi).epsilon(1e-15));

  CHECK_THROWS_AS(rotation_angles(0), std::invalid_argument);
}

TEST_CASE("point rotation about the vertical axis") {
  const double pi = std::numbers::pi;
  auto p = rotate_point({1.0, 0.0, 0.0}, pi / 2);
  CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[2] == 0.0);

  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    std::array<double, 3> q{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    const double theta = rng.uniform(0, 2 * pi);
    auto full = rotate_point(q, 2 * pi);
    for (int a = 0; a < 3; ++a) CHECK(full[a] == doctest::Approx(q[a]).epsilon(1e-12));

    auto r = rotate_point(q, theta);
    const double nq = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
    const double nr = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    CHECK(nr == doctest::Approx(nq).epsilon(1e-12));

    auto back = rotate_point(r, -theta);
    for (int a = 0; a < 3; ++a) CHECK(std::fabs(back[a] - q[a]) < 1e-12);
  }
}

TEST_CASE("color augmentation identity, clamping, and alpha statistics") {
  Rng rng(12);
  ColorAugmentConfig identity;
  identity.alpha_min = identity.alpha_max = 1.0;
  identity.noise_sigma = 0.0;
  auto c = augment_color({0.2, 0.5, 0.9}, rng, identity);
  CHECK(c == std::array<double, 3>{0.2, 0.5, 0.9});

  for (int i = 0; i < 1000; ++i) {
    auto out = augment_color({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)}, rng);
    for (double v : out) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  // Monte-Carlo check that alpha is uniform on [0.5, 1.5]: with gray 0.5
  // inputs and no additive noise, output/input estimates alpha.
  ColorAugmentConfig noiseless;
  noiseless.noise_sigma = 0.0;
  double mean = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    mean += augment_color({0.5, 0.5, 0.5}, rng, noiseless)[0] / 0.5;
  }
  mean /= draws;
  CHECK(std::fabs(mean - 1.0) < 0.01);
}

TEST_CASE("view aggregation is the arithmetic mean") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor same = aggregate_views({a, a, a});
  CHECK(same.values() == a.values());

  Tensor neg = Tensor::from_data({2, 2}, {-1, -2, -3, -4});
  Tensor zero = aggregate_views({a, neg});
  CHECK(zero.values() == std::vector<double>{0, 0, 0, 0});

  Rng rng(4);
  Tensor x = Tensor::uniform({3, 3}, rng, -2, 2);
  Tensor y = Tensor::uniform({3, 3}, rng, -2, 2);
  Tensor z = Tensor::uniform({3, 3}, rng, -2, 2);
  Tensor fwd = aggregate_views({x, y, z});
  Tensor rev = aggregate_views({z, x, y});
  for (std::size_t i = 0; i < fwd.size(); ++i) {
    CHECK(std::fabs(fwd.at(i) - rev.at(i)) < 1e-12);
  }

  CHECK_THROWS_AS(aggregate_views({}), std::invalid_argument);
}

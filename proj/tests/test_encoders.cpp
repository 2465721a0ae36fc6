#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "vg3d/encoders.hpp"
#include "vg3d/gradcheck.hpp"

using namespace vg3d;

TEST_CASE("point encoding is exactly permutation invariant") {
  Rng rng(14);
  PointEncoder enc = PointEncoder::init(16, rng);
  Tensor pts = Tensor::uniform({12, 6}, rng, -1.0, 1.0);
  Tensor base = enc(pts, 1);

  // shuffle the point rows
  std::vector<std::size_t> perm(12);
  for (std::size_t i = 0; i < 12; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<double> shuffled(12 * 6);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t c = 0; c < 6; ++c) shuffled[i * 6 + c] = pts.at(perm[i] * 6 + c);
  }
  Tensor out = enc(Tensor::from_data({12, 6}, shuffled), 1);
  CHECK(out.values() == base.values());

  // duplicating every point leaves the max-pool unchanged
  std::vector<double> doubled;
  doubled.insert(doubled.end(), pts.values().begin(), pts.values().end());
  doubled.insert(doubled.end(), pts.values().begin(), pts.values().end());
  // interleaved duplicate rows still pool per object
  Tensor dup = enc(Tensor::from_data({24, 6}, doubled), 1);
  CHECK(dup.values() == base.values());

  CHECK_THROWS_AS(enc(Tensor::zeros({0, 6}), 1), std::invalid_argument);
}

TEST_CASE("point encoder gradients agree with finite differences") {
  Rng rng(15);
  PointEncoder enc = PointEncoder::init(8, rng);
  GradCheckCase c;
  c.name = "point_encoder_unit";
  c.params.push_back({"pts", Tensor::uniform({10, 6}, rng, -1.0, 1.0, true)});
  enc.collect(c.params, "enc");
  c.build_loss = [enc](ParamSet& ps) { return sum_all(enc(ps[0].tensor, 2)); };
  CHECK(finite_difference_error(c, 1e-5) < 1e-4);
}

TEST_CASE("scene attention at n=1 collapses to the value path") {
  Rng rng(20);
  Tensor wq = Tensor::randn({6, 6}, rng, 0.4, true);
  Tensor wk = Tensor::randn({6, 6}, rng, 0.4, true);
  Tensor wv = Tensor::randn({6, 6}, rng, 0.4, true);
  Tensor solo = Tensor::uniform({1, 6}, rng, -1.0, 1.0);
  SceneAttentionOut out = scene_attention(solo, wq, wk, wv);
  CHECK(out.weights.at(0) == 1.0);
  Tensor v = matmul(solo, wv);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(out.attended.at(i) == doctest::Approx(v.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("scene attention weights are a distribution per query") {
  Rng rng(22);
  Tensor wq = Tensor::randn({8, 8}, rng, 0.4, true);
  Tensor wk = Tensor::randn({8, 8}, rng, 0.4, true);
  Tensor wv = Tensor::randn({8, 8}, rng, 0.4, true);
  Tensor objs = Tensor::uniform({5, 8}, rng, -1.0, 1.0);
  SceneAttentionOut out = scene_attention(objs, wq, wk, wv);
  for (std::size_t i = 0; i < 5; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 5; ++j) row += out.weights.at2(i, j);
    CHECK(std::fabs(row - 1.0) < 1e-12);
  }
}

TEST_CASE("scene attention matches the explicit exp/sum loop") {
  Rng rng(23);
  const std::size_t n = 3, d = 5;
  Tensor wq = Tensor::randn({d, d}, rng, 0.5, true);
  Tensor wk = Tensor::randn({d, d}, rng, 0.5, true);
  Tensor wv = Tensor::randn({d, d}, rng, 0.5, true);
  Tensor objs = Tensor::uniform({n, d}, rng, -1.0, 1.0);
  SceneAttentionOut out = scene_attention(objs, wq, wk, wv);

  // naive reference: project row-by-row, then the exp/sum aggregation
  auto project = [&](const Tensor& w, std::size_t row) {
    std::vector<double> v(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t k = 0; k < d; ++k) v[c] += objs.at2(row, k) * w.at2(k, c);
    }
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto qi = project(wq, i);
    std::vector<double> logits(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const auto kj = project(wk, j);
      for (std::size_t c = 0; c < d; ++c) logits[j] += qi[c] * kj[c];
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(logits[j]);
    std::vector<double> expect(d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const auto vj = project(wv, j);
      const double w = std::exp(logits[j]) / denom;
      CHECK(std::fabs(out.weights.at2(i, j) - w) < 1e-12);
      for (std::size_t c = 0; c < d; ++c) expect[c] += w * vj[c];
    }
    for (std::size_t c = 0; c < d; ++c) {
      CHECK(std::fabs(out.attended.at2(i, c) - expect[c]) < 1e-12);
    }
  }
}

TEST_CASE("zero value projection reduces the encoder to normalized input") {
  Rng rng(25);
  SceneAwareEncoder enc = SceneAwareEncoder::init(6, 1, rng);
  for (auto& v : enc.layers[0].wv.leaf_values()) v = 0.0;
  Tensor objs = Tensor::uniform({4, 6}, rng, -1.0, 1.0);
  Tensor out = enc(objs);
  Tensor expect = layer_norm(objs);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("zero-depth scene encoder is the identity") {
  Rng rng(26);
  SceneAwareEncoder enc = SceneAwareEncoder::init(6, 0, rng);
  Tensor objs = Tensor::uniform({3, 6}, rng, -1.0, 1.0);
  CHECK(enc(objs).values() == objs.values());
}

TEST_CASE("text encoder determinism and positional sensitivity") {
  Rng rng(30);
  TextEncoder enc = TextEncoder::init(10, 12, 2, 1, rng);
  Tensor a = enc({0, 4, 7, 2});
  Tensor b = enc({0, 4, 7, 2});
  CHECK(a.values() == b.values());

  Tensor swapped = enc({0, 7, 4, 2});
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size() && !any_diff; ++i) {
    any_diff = std::fabs(a.at(i) - swapped.at(i)) > 1e-9;
  }
  CHECK(any_diff);

  CHECK_THROWS_AS(enc({0, 10}), std::out_of_range);
  CHECK_THROWS_AS(enc({0}), std::invalid_argument);
}

TEST_CASE("text category head shapes and zero head") {
  Rng rng(31);
  TextCategoryHead head = TextCategoryHead::init(12, 8, rng);
  Tensor cls = Tensor::uniform({12}, rng, -1.0, 1.0);
  Tensor logits = head(cls);
  CHECK(logits.shape() == Shape{8});

  for (auto& v : head.l2.w.leaf_values()) v = 0.0;
  Tensor zeroed = head(cls);
  for (double v : zeroed.values()) CHECK(v == 0.0);
}

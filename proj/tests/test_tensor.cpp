#include <doctest.h>

#include <cmath>

#include "vg3d/checkpoint.hpp"
#include "vg3d/optim.hpp"
#include "vg3d/rng.hpp"
#include "vg3d/tensor.hpp"

using namespace vg3d;

namespace {

// Naive triple-loop product, the reference for the vectorized kernel.
std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(eye, m);
  CHECK(out.values() == std::vector<double>{1, 2, 3, 4});

  Tensor proj = Tensor::from_data({2, 2}, {1, 0, 0, 0});
  Tensor v = Tensor::from_data({2, 2}, {5, 6, 7, 8});
  CHECK(matmul(proj, v).values() == std::vector<double>{5, 6, 0, 0});
}

TEST_CASE("matmul matches the loop oracle") {
  Rng rng(11);
  Tensor a = Tensor::uniform({3, 4}, rng, -2.0, 2.0);
  Tensor b = Tensor::uniform({4, 2}, rng, -2.0, 2.0);
  const auto expect = matmul_oracle(a.values(), b.values(), 3, 4, 2);
  Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(std::fabs(c.at(i) - expect[i]) < 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax symmetric, shifted, and stabilized") {
  Tensor s = softmax(Tensor::from_data({2}, {0.0, 0.0}), 0);
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at(1) == doctest::Approx(0.5).epsilon(1e-12));

  // direct arithmetic: [x, x+1] -> [1/(1+e), e/(1+e)]
  Tensor t = softmax(Tensor::from_data({2}, {0.3, 1.3}), 0);
  CHECK(t.at(0) == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
  CHECK(t.at(1) == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))).epsilon(1e-12));

  Tensor big = softmax(Tensor::from_data({2}, {1000.0, 0.0}), 0);
  CHECK(std::isfinite(big.at(0)));
  CHECK(big.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.at(1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax slices sum to one") {
  Rng rng(5);
  Tensor x = Tensor::uniform({4, 7}, rng, -3.0, 3.0);
  Tensor s = softmax(x, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) total += s.at2(r, c);
    CHECK(std::fabs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("cross entropy values and gradient") {
  Tensor uniform = Tensor::from_data({4}, {0.7, 0.7, 0.7, 0.7}, true);
  Tensor loss = cross_entropy(uniform, 1);
  CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  backward(loss);
  const auto& g = uniform.grad();
  CHECK(g[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-0.75).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(g[3] == doctest::Approx(0.25).epsilon(1e-12));

  Tensor confident = Tensor::from_data({2}, {10.0, -10.0});
  // direct arithmetic: log(1 + exp(-20))
  CHECK(cross_entropy(confident, 0).item() ==
        doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));

  CHECK_THROWS_AS(cross_entropy(confident, 2), std::out_of_range);
}

TEST_CASE("detach blocks gradients and is idempotent") {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  Tensor w = Tensor::from_data({3}, {4.0, 5.0, 6.0}, true);
  Tensor y = sum_all(mul(x.detach(), w));
  backward(y);
  CHECK(x.grad() == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(w.grad() == std::vector<double>{1.0, 2.0, 3.0});

  Tensor once = x.detach();
  Tensor twice = once.detach();
  CHECK(once.values() == twice.values());

  // a loss built only from a detached branch leaves everything untouched
  Tensor z = Tensor::from_data({2}, {1.0, 1.0}, true);
  Tensor detached_only = sum_all(scale(z, 3.0).detach());
  backward(detached_only);
  CHECK(z.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward basics and accumulation") {
  Tensor x = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  Tensor s = sum_all(x);
  backward(s);
  CHECK(x.grad() == std::vector<double>{1.0, 1.0, 1.0});

  x.zero_grad();
  Tensor q = sum_all(mul(x, x));
  backward(q);
  CHECK(x.grad() == std::vector<double>{2.0, -4.0, 1.0});

  // repeated calls without reset accumulate
  backward(sum_all(x));
  CHECK(x.grad() == std::vector<double>{3.0, -3.0, 2.0});

  CHECK_THROWS_AS(backward(x), std::invalid_argument);
}

TEST_CASE("layer_norm and standardize slices") {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0});
  Tensor g = standardize(x);
  const double r = std::sqrt(1.5);  // direct arithmetic: 1/sqrt(2/3)
  CHECK(g.at(0) == doctest::Approx(-r).epsilon(1e-12));
  CHECK(g.at(1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g.at(2) == doctest::Approx(r).epsilon(1e-12));

  CHECK(standardize(Tensor::from_data({3}, {5.0, 5.0, 5.0})).values() ==
        std::vector<double>{0.0, 0.0, 0.0});
  CHECK_THROWS_AS(standardize(Tensor::from_data({1}, {2.0})), std::invalid_argument);
}

TEST_CASE("max-pool keeps argmax routing") {
  Tensor x = Tensor::from_data({2, 2, 2}, {1, 9, 3, 4, 8, 2, 5, 7}, true);
  Tensor m = max(x, 1);
  CHECK(m.values() == std::vector<double>{3, 9, 8, 7});
  backward(sum_all(m));
  CHECK(x.grad() == std::vector<double>{0, 1, 1, 0, 1, 0, 0, 1});
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Rng rng(3);
  ParamSet ps;
  ps.push_back({"w", Tensor::uniform({4}, rng, -1.0, 1.0, true)});
  const auto before = ps[0].tensor.values();
  AdamState st = AdamState::init(ps);
  zero_grads(ps);
  adam_step(ps, st, {});
  CHECK(ps[0].tensor.values() == before);
}

TEST_CASE("adam first step moves by ~lr*sign(g)") {
  // hand-computed: m-hat = g, v-hat = g^2, so step = lr * g / (|g| + eps)
  ParamSet ps;
  ps.push_back({"w", Tensor::from_data({2}, {0.4, -0.3}, true)});
  AdamState st = AdamState::init(ps);
  Tensor loss = sum_all(mul(ps[0].tensor, Tensor::from_data({2}, {2.0, -0.5})));
  backward(loss);
  AdamConfig cfg;
  cfg.lr = 1e-2;
  adam_step(ps, st, cfg);
  const double expect0 = 0.4 - cfg.lr * 2.0 / (2.0 + cfg.eps);
  const double expect1 = -0.3 - cfg.lr * (-0.5) / (0.5 + cfg.eps);
  CHECK(ps[0].tensor.at(0) == doctest::Approx(expect0).epsilon(1e-12));
  CHECK(ps[0].tensor.at(1) == doctest::Approx(expect1).epsilon(1e-12));
}

TEST_CASE("adam trajectories are seed deterministic") {
  auto run = [] {
    Rng rng(99);
    ParamSet ps;
    ps.push_back({"w", Tensor::randn({6}, rng, 1.0, true)});
    AdamState st = AdamState::init(ps);
    for (int step = 0; step < 25; ++step) {
      zero_grads(ps);
      backward(sum_all(mul(ps[0].tensor, ps[0].tensor)));
      adam_step(ps, st, {});
    }
    return ps[0].tensor.values();
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round-trips names, shapes, and payloads") {
  Rng rng(17);
  Checkpoint ckpt;
  ckpt["layer.w"] = {{3, 4}, Tensor::randn({3, 4}, rng, 1.0).values()};
  ckpt["layer.b"] = {{4}, {0.25, -1.5, 3.125, 0.0}};
  const std::string path = "tensor_ckpt_roundtrip.bin";
  save_checkpoint(path, ckpt);
  Checkpoint loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded["layer.w"].shape == Shape{3, 4});
  CHECK(loaded["layer.w"].data == ckpt["layer.w"].data);
  CHECK(loaded["layer.b"].data == ckpt["layer.b"].data);
  std::remove(path.c_str());
}

TEST_CASE("embedding rejects out-of-vocabulary ids") {
  Tensor table = Tensor::zeros({5, 3});
  CHECK_THROWS_AS(embedding(table, {0, 5}), std::out_of_range);
}

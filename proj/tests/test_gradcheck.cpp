#include <doctest.h>

#include "vg3d/gradcheck.hpp"

using namespace vg3d;

TEST_CASE("default suite passes every registered op") {
  GradCheckSuite suite = default_grad_suite();
  GradCheckReport report = suite.run();
  CHECK(report.results.size() >= 30);  // primitives + composite paths + end-to-end
  for (const auto& r : report.results) {
    INFO(r.name, " max rel err ", r.max_rel_err);
    CHECK(r.passed);
  }
  CHECK(report.all_passed);
}

TEST_CASE("an op with a wrong backward fails by name") {
  // Hand-rolled node whose backward doubles the true gradient.
  auto wrong_scale = [](const Tensor& x) {
    auto node = std::make_shared<TensorNode>();
    node->shape = x.shape();
    node->value.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) node->value[i] = 3.0 * x.at(i);
    node->parents = {x.node()};
    node->requires_grad = x.requires_grad();
    if (node->requires_grad) {
      node->grad.assign(x.size(), 0.0);
      node->backward = [](TensorNode& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += 6.0 * self.grad[i];
      };
    }
    return Tensor::wrap(node);
  };

  GradCheckSuite suite;
  GradCheckCase c;
  c.name = "wrong_scale";
  c.params.push_back({"x", Tensor::from_data({3}, {0.5, -1.0, 2.0}, true)});
  c.build_loss = [wrong_scale](ParamSet& ps) { return sum_all(wrong_scale(ps[0].tensor)); };
  suite.add(std::move(c));
  GradCheckReport report = suite.run();
  REQUIRE(report.results.size() == 1);
  CHECK(report.results[0].name == "wrong_scale");
  CHECK_FALSE(report.results[0].passed);
  CHECK_FALSE(report.all_passed);
}

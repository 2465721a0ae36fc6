#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vg3d/optim.hpp"
#include "vg3d/tensor.hpp"

namespace vg3d {

// A registered check: build_loss constructs a fresh scalar loss from the
// case's leaf parameters; the harness compares analytic gradients against
// central finite differences.
struct GradCheckCase {
  std::string name;
  ParamSet params;
  std::function<Tensor(ParamSet&)> build_loss;
  // 0 probes every entry; otherwise a seeded random subset per parameter.
  std::size_t probes_per_param = 0;
};

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckResult> results;
  bool all_passed = true;
  double worst_rel_err = 0.0;
};

class GradCheckSuite {
 public:
  explicit GradCheckSuite(double eps = 1e-5, double tolerance = 1e-4)
      : eps_(eps), tolerance_(tolerance) {}

  void add(GradCheckCase c) { cases_.push_back(std::move(c)); }
  GradCheckReport run() const;

  double tolerance() const { return tolerance_; }

 private:
  double eps_;
  double tolerance_;
  std::vector<GradCheckCase> cases_;
};

// Max relative error between analytic gradients and central finite
// differences for one case.
double finite_difference_error(const GradCheckCase& c, double eps);

// Every differentiable primitive plus composite encoder/fusion paths and
// the end-to-end composite loss on a 3-object fixture.
GradCheckSuite default_grad_suite();

}  // namespace vg3d

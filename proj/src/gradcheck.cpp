#include "vg3d/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vg3d/rng.hpp"

namespace vg3d {

double finite_difference_error(const GradCheckCase& c, double eps) {
  GradCheckCase& mut = const_cast<GradCheckCase&>(c);

  // Analytic gradients at the base point.
  zero_grads(mut.params);
  Tensor loss = mut.build_loss(mut.params);
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(mut.params.size());
  for (auto& p : mut.params) analytic.push_back(p.tensor.grad());

  Rng probe_rng(0x5eedULL);
  double worst = 0.0;
  for (std::size_t k = 0; k < mut.params.size(); ++k) {
    auto& values = mut.params[k].tensor.leaf_values();
    std::vector<std::size_t> probes;
    if (c.probes_per_param == 0 || c.probes_per_param >= values.size()) {
      probes.resize(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) probes[i] = i;
    } else {
      for (std::size_t i = 0; i < c.probes_per_param; ++i) {
        probes.push_back(probe_rng.index(values.size()));
      }
      std::sort(probes.begin(), probes.end());
      probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    }
    for (std::size_t i : probes) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = mut.build_loss(mut.params).item();
      values[i] = saved - eps;
      const double minus = mut.build_loss(mut.params).item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

GradCheckReport GradCheckSuite::run() const {
  GradCheckReport report;
  for (const auto& c : cases_) {
    GradCheckResult r;
    r.name = c.name;
    r.max_rel_err = finite_difference_error(c, eps_);
    r.passed = r.max_rel_err < tolerance_;
    report.worst_rel_err = std::max(report.worst_rel_err, r.max_rel_err);
    report.all_passed = report.all_passed && r.passed;
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace vg3d

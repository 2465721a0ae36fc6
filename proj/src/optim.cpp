#include "vg3d/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace vg3d {

void zero_grads(ParamSet& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

AdamState AdamState::init(const ParamSet& params) {
  AdamState s;
  s.first_moment.reserve(params.size());
  s.second_moment.reserve(params.size());
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.tensor.size(), 0.0);
    s.second_moment.emplace_back(p.tensor.size(), 0.0);
  }
  return s;
}

void adam_step(ParamSet& params, AdamState& state, const AdamConfig& cfg) {
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: state tracks " +
                                std::to_string(state.first_moment.size()) + " parameters, got " +
                                std::to_string(params.size()));
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& t = params[k].tensor;
    if (!t.requires_grad()) continue;
    const auto& g = t.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != t.size()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + params[k].name);
    }
    auto& values = t.leaf_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      values[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace vg3d

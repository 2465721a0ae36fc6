#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vg3d/tensor.hpp"

namespace vg3d {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamSet = std::vector<NamedParam>;

void zero_grads(ParamSet& params);

// Per-parameter Adam moments plus the shared step counter.
struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step_count = 0;

  static AdamState init(const ParamSet& params);
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over every parameter, reading the
// gradients accumulated on the parameter tensors.
void adam_step(ParamSet& params, AdamState& state, const AdamConfig& cfg);

}  // namespace vg3d

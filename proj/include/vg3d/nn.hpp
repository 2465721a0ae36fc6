#pragma once

#include <string>

#include "vg3d/optim.hpp"
#include "vg3d/rng.hpp"
#include "vg3d/tensor.hpp"

namespace vg3d {

// Affine map on rank-2 inputs: [r, in] -> [r, out].
struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]; undefined when constructed without bias

  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool bias = true);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// Scaled dot-product attention with learned projections,
// softmax(QK^T/sqrt(d_head))V. Queries may come from a different width than
// the attended memory.
struct Attention {
  Tensor wq;  // [d_query, d]
  Tensor wk;  // [d_memory, d]
  Tensor wv;  // [d_memory, d]
  Tensor wo;  // [d, d]
  std::size_t n_heads = 1;

  static Attention init(std::size_t d_query, std::size_t d_memory, std::size_t d,
                        std::size_t n_heads, Rng& rng);
  // weights_out, when given, receives the stacked per-head attention
  // weights, shape [n_heads * rows(queries), rows(memory)].
  Tensor operator()(const Tensor& queries, const Tensor& memory,
                    Tensor* weights_out = nullptr) const;
  void collect(ParamSet& ps, const std::string& prefix) const;
};

// Two-layer perceptron with a ReLU between, width-preserving.
struct FeedForward {
  Linear l1;
  Linear l2;

  static FeedForward init(std::size_t d, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamSet& ps, const std::string& prefix) const;
};

}  // namespace vg3d

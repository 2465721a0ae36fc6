#include "vg3d/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace vg3d {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool bias) {
  Linear l;
  l.w = Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), true);
  if (bias) l.b = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, w);
  return b.defined() ? add_bias(y, b) : y;
}

void Linear::collect(ParamSet& ps, const std::string& prefix) const {
  ps.push_back({prefix + ".w", w});
  if (b.defined()) ps.push_back({prefix + ".b", b});
}

Attention Attention::init(std::size_t d_query, std::size_t d_memory, std::size_t d,
                          std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || d % n_heads != 0) {
    throw std::invalid_argument("Attention: width " + std::to_string(d) +
                                " not divisible into " + std::to_string(n_heads) + " heads");
  }
  Attention a;
  a.n_heads = n_heads;
  const double sq = 1.0 / std::sqrt(static_cast<double>(d_query));
  const double sm = 1.0 / std::sqrt(static_cast<double>(d_memory));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  a.wq = Tensor::randn({d_query, d}, rng, sq, true);
  a.wk = Tensor::randn({d_memory, d}, rng, sm, true);
  a.wv = Tensor::randn({d_memory, d}, rng, sm, true);
  a.wo = Tensor::randn({d, d}, rng, sd, true);
  return a;
}

Tensor Attention::operator()(const Tensor& queries, const Tensor& memory,
                             Tensor* weights_out) const {
  const std::size_t d = wq.dim(1);
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = matmul(queries, wq);
  Tensor k = matmul(memory, wk);
  Tensor v = matmul(memory, wv);
  std::vector<Tensor> head_outs;
  std::vector<Tensor> head_weights;
  for (std::size_t h = 0; h < n_heads; ++h) {
    Tensor qh = n_heads == 1 ? q : slice_cols(q, h * dh, dh);
    Tensor kh = n_heads == 1 ? k : slice_cols(k, h * dh, dh);
    Tensor vh = n_heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor w = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    head_outs.push_back(matmul(w, vh));
    if (weights_out) head_weights.push_back(w);
  }
  if (weights_out) {
    *weights_out = n_heads == 1 ? head_weights[0] : concat_rows(head_weights);
  }
  Tensor merged = n_heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return matmul(merged, wo);
}

void Attention::collect(ParamSet& ps, const std::string& prefix) const {
  ps.push_back({prefix + ".wq", wq});
  ps.push_back({prefix + ".wk", wk});
  ps.push_back({prefix + ".wv", wv});
  ps.push_back({prefix + ".wo", wo});
}

FeedForward FeedForward::init(std::size_t d, Rng& rng) {
  FeedForward f;
  f.l1 = Linear::init(d, d, rng, true);
  f.l2 = Linear::init(d, d, rng, true);
  return f;
}

Tensor FeedForward::operator()(const Tensor& x) const { return l2(relu(l1(x))); }

void FeedForward::collect(ParamSet& ps, const std::string& prefix) const {
  l1.collect(ps, prefix + ".l1");
  l2.collect(ps, prefix + ".l2");
}

}  // namespace vg3d

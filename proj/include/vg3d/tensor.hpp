#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vg3d/rng.hpp"

namespace vg3d {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// One vertex of the differentiation graph. Values are written once at
// construction; gradients accumulate across backward() calls until
// zero_grad().
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;  // accumulates into parents' grads
};

// Dense row-major 64-bit tensor with reverse-mode differentiation.
// Copying a Tensor copies the handle, not the payload.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor constant(Shape s, double v, bool requires_grad = false);
  static Tensor from_data(Shape s, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor randn(Shape s, Rng& rng, double stddev, bool requires_grad = false);
  static Tensor uniform(Shape s, Rng& rng, double lo, double hi, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }

  double item() const;                          // value of a 1-element tensor
  double at(std::size_t flat) const { return node_->value[flat]; }
  double at2(std::size_t r, std::size_t c) const;
  const std::vector<double>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<double>& grad() const;
  void zero_grad();

  // In-place value update for optimizer steps on leaf parameters. Graph
  // interior nodes must never be mutated.
  std::vector<double>& leaf_values();

  // Same values, severed from the graph; gradients do not flow through.
  Tensor detach() const;

  std::shared_ptr<TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;
};

// ---- differentiable primitives ----

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n] -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias over trailing dim
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor cross_entropy(const Tensor& logits, std::size_t target);  // rank-1 -> scalar
// Mean over rows of cross-entropy against per-row targets; logits [n, c].
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<std::size_t>& targets);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor max(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);   // -> scalar
Tensor mean_all(const Tensor& x);  // -> scalar
Tensor transpose(const Tensor& x);              // rank-2
Tensor reshape(const Tensor& x, Shape s);
Tensor concat_rows(const std::vector<Tensor>& parts);          // rank-2, equal cols
Tensor concat_cols(const std::vector<Tensor>& parts);          // rank-2, equal rows
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);  // rank-2
Tensor select_row(const Tensor& x, std::size_t row);  // rank-2 -> rank-1
Tensor select_col(const Tensor& x, std::size_t col);  // rank-2 -> rank-1
Tensor layer_norm(const Tensor& x, double eps = 1e-5);  // normalize last axis
// Exact zero-mean / unit-population-variance transform of a vector; returns
// zeros when the standard deviation is below 1e-9.
Tensor standardize(const Tensor& x);
Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids);  // [v,d] -> [n,d]
Tensor mean_of(const std::vector<Tensor>& xs);  // n-ary elementwise mean

// ---- pairwise-map primitives (tensors shaped [n*n, d] with row i*n+j) ----

// out[i*n+j] = pairs[i*n+j] + rows[j]
Tensor add_anchor_rows(const Tensor& pairs, const Tensor& rows);
// scores[i, j] = dot(q[i], pairs[i*n+j]) * scale for j != i, 0 on the diagonal
Tensor pair_scores(const Tensor& q, const Tensor& pairs, double scale);
// Row softmax over j != i; diagonal of the output is 0.
Tensor masked_row_softmax(const Tensor& scores);
// out[i] = sum_j w[i,j] * pairs[i*n+j]
Tensor weighted_pair_sum(const Tensor& w, const Tensor& pairs);
// out[i, d] = max over j != i of pairs[i*n+j, d]
Tensor masked_pair_max(const Tensor& pairs);
// out[i, d] = mean over j != i of pairs[i*n+j, d]
Tensor masked_pair_mean(const Tensor& pairs);

// Populates gradients of every reachable requires_grad tensor. Repeated
// calls accumulate until zero_grad().
void backward(const Tensor& loss);

}  // namespace vg3d

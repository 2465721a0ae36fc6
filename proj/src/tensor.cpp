#include "vg3d/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace vg3d {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace {

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<std::shared_ptr<TensorNode>> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.assign(shape_size(n->shape), 0.0);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->grad.assign(n->value.size(), 0.0);
  return n;
}

void check_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got shape " +
                                shape_str(t.shape()));
  }
}

// Decomposes a shape around `axis` into (outer, n, inner) so that the flat
// index of element (o, a, i) is (o * n + a) * inner + i.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " +
                                shape_str(s));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out.push_back(s[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

void matmul_kernel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

double stable_log_sum_exp(const double* x, std::size_t n, std::size_t stride = 1) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i * stride]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * stride] - m);
  return m + std::log(s);
}

}  // namespace

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->value.assign(shape_size(n->shape), 0.0);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->value.size(), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::constant(Shape s, double v, bool requires_grad) {
  Tensor t = zeros(std::move(s), requires_grad);
  std::fill(t.node_->value.begin(), t.node_->value.end(), v);
  return t;
}

Tensor Tensor::from_data(Shape s, std::vector<double> data, bool requires_grad) {
  if (shape_size(s) != data.size()) {
    throw std::invalid_argument("from_data: shape " + shape_str(s) + " does not hold " +
                                std::to_string(data.size()) + " values");
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->value.size(), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

Tensor Tensor::randn(Shape s, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(s), requires_grad);
  for (double& x : t.node_->value) x = rng.normal(0.0, stddev);
  return t;
}

Tensor Tensor::uniform(Shape s, Rng& rng, double lo, double hi, bool requires_grad) {
  Tensor t = zeros(std::move(s), requires_grad);
  for (double& x : t.node_->value) x = rng.uniform(lo, hi);
  return t;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item: tensor has " + std::to_string(size()) + " elements");
  }
  return node_->value[0];
}

double Tensor::at2(std::size_t r, std::size_t c) const {
  return node_->value[r * node_->shape.back() + c];
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) {
    throw std::logic_error("grad: tensor does not require gradients");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::vector<double>& Tensor::leaf_values() {
  if (!node_->parents.empty()) {
    throw std::logic_error("leaf_values: tensor is not a graph leaf");
  }
  return node_->value;
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = false;
  return Tensor(std::move(n));
}

// ---- primitives ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul");
  check_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  auto node = make_node({m, n}, {a.node(), b.node()});
  matmul_kernel(a.values().data(), b.values().data(), node->value.data(), m, k, n);
  if (node->requires_grad) {
    node->backward = [m, k, n](TensorNode& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const double* g = self.grad.data();
      if (pa.requires_grad) {
        // dA[i,p] += sum_j g[i,j] * B[p,j]
        const double* bv = pb.value.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* gi = g + i * n;
            const double* bp = bv + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
            pa.grad[i * k + p] += acc;
          }
        }
      }
      if (pb.requires_grad) {
        // dB[p,j] += sum_i A[i,p] * g[i,j]
        const double* av = pa.value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            double* dbp = pb.grad.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) dbp[j] += aip * gi[j];
          }
        }
      }
    };
  }
  return Tensor::wrap(node);
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, double bsign,
                          bool product) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(name) + ": shapes differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  auto node = make_node(a.shape(), {a.node(), b.node()});
  const std::size_t n = node->value.size();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  if (product) {
    for (std::size_t i = 0; i < n; ++i) node->value[i] = av[i] * bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) node->value[i] = av[i] + bsign * bv[i];
  }
  if (node->requires_grad) {
    node->backward = [bsign, product, n](TensorNode& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (product) {
        for (std::size_t i = 0; i < n; ++i) {
          if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.value[i];
          if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.value[i];
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          if (pa.requires_grad) pa.grad[i] += self.grad[i];
          if (pb.requires_grad) pb.grad[i] += bsign * self.grad[i];
        }
      }
    };
  }
  return Tensor::wrap(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "add", 1.0, false); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "sub", -1.0, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "mul", 0.0, true); }

Tensor scale(const Tensor& a, double s) {
  auto node = make_node(a.shape(), {a.node()});
  const std::size_t n = node->value.size();
  for (std::size_t i = 0; i < n; ++i) node->value[i] = a.values()[i] * s;
  if (node->requires_grad) {
    node->backward = [s, n](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < n; ++i) p.grad[i] += s * self.grad[i];
    };
  }
  return Tensor::wrap(node);
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    throw std::invalid_argument("add_bias: bias " + shape_str(bias.shape()) +
                                " does not match trailing dim of " + shape_str(x.shape()));
  }
  auto node = make_node(x.shape(), {x.node(), bias.node()});
  const std::size_t c = bias.dim(0);
  const std::size_t rows = x.size() / c;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      node->value[r * c + j] = x.values()[r * c + j] + bias.values()[j];
    }
  }
  if (node->requires_grad) {
    node->backward = [rows, c](TensorNode& self) {
      auto& px = *self.parents[0];
      auto& pb = *self.parents[1];
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          const double g = self.grad[r * c + j];
          if (px.requires_grad) px.grad[r * c + j] += g;
          if (pb.requires_grad) pb.grad[j] += g;
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor relu(const Tensor& x) {
  auto node = make_node(x.shape(), {x.node()});
  const std::size_t n = node->value.size();
  // written so NaN propagates instead of clamping to zero
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x.values()[i];
    node->value[i] = v < 0.0 ? 0.0 : v;
  }
  if (node->requires_grad) {
    node->backward = [n](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < n; ++i) {
        if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisView v = axis_view(x.shape(), axis);
  auto node = make_node(x.shape(), {x.node()});
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.n * v.inner + i;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < v.n; ++a) m = std::max(m, x.values()[base + a * v.inner]);
      double s = 0.0;
      for (std::size_t a = 0; a < v.n; ++a) {
        const double e = std::exp(x.values()[base + a * v.inner] - m);
        node->value[base + a * v.inner] = e;
        s += e;
      }
      for (std::size_t a = 0; a < v.n; ++a) node->value[base + a * v.inner] /= s;
    }
  }
  if (node->requires_grad) {
    node->backward = [v](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t base = o * v.n * v.inner + i;
          double dot = 0.0;
          for (std::size_t a = 0; a < v.n; ++a) {
            const std::size_t idx = base + a * v.inner;
            dot += self.grad[idx] * self.value[idx];
          }
          for (std::size_t a = 0; a < v.n; ++a) {
            const std::size_t idx = base + a * v.inner;
            p.grad[idx] += self.value[idx] * (self.grad[idx] - dot);
          }
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  if (logits.rank() != 1) {
    throw std::invalid_argument("cross_entropy: expected rank-1 logits, got " +
                                shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  if (target >= n) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) +
                            " out of range for " + std::to_string(n) + " logits");
  }
  auto node = make_node({1}, {logits.node()});
  const double lse = stable_log_sum_exp(logits.values().data(), n);
  node->value[0] = lse - logits.values()[target];
  if (node->requires_grad) {
    node->backward = [n, target, lse](TensorNode& self) {
      auto& p = *self.parents[0];
      const double g = self.grad[0];
      for (std::size_t i = 0; i < n; ++i) {
        double soft = std::exp(p.value[i] - lse);
        if (i == target) soft -= 1.0;
        p.grad[i] += g * soft;
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<std::size_t>& targets) {
  check_rank2(logits, "cross_entropy_rows");
  const std::size_t rows = logits.dim(0), c = logits.dim(1);
  if (targets.size() != rows) {
    throw std::invalid_argument("cross_entropy_rows: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) + " rows");
  }
  for (std::size_t t : targets) {
    if (t >= c) throw std::out_of_range("cross_entropy_rows: target out of range");
  }
  auto node = make_node({1}, {logits.node()});
  std::vector<double> lses(rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    lses[r] = stable_log_sum_exp(logits.values().data() + r * c, c);
    total += lses[r] - logits.values()[r * c + targets[r]];
  }
  node->value[0] = total / static_cast<double>(rows);
  if (node->requires_grad) {
    node->backward = [rows, c, targets, lses](TensorNode& self) {
      auto& p = *self.parents[0];
      const double g = self.grad[0] / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < c; ++i) {
          double soft = std::exp(p.value[r * c + i] - lses[r]);
          if (i == targets[r]) soft -= 1.0;
          p.grad[r * c + i] += g * soft;
        }
      }
    };
  }
  return Tensor::wrap(node);
}

namespace {

enum class Reduce { Sum, Mean, Max };

Tensor reduce_axis(const Tensor& x, std::size_t axis, Reduce kind) {
  const AxisView v = axis_view(x.shape(), axis);
  auto node = make_node(drop_axis(x.shape(), axis), {x.node()});
  std::vector<std::size_t> arg;  // winning index for max
  if (kind == Reduce::Max) arg.assign(v.outer * v.inner, 0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.n * v.inner + i;
      const std::size_t out = o * v.inner + i;
      if (kind == Reduce::Max) {
        double best = x.values()[base];
        std::size_t bi = 0;
        for (std::size_t a = 1; a < v.n; ++a) {
          const double val = x.values()[base + a * v.inner];
          if (val > best) {
            best = val;
            bi = a;
          }
        }
        node->value[out] = best;
        arg[out] = bi;
      } else {
        double s = 0.0;
        for (std::size_t a = 0; a < v.n; ++a) s += x.values()[base + a * v.inner];
        node->value[out] = kind == Reduce::Mean ? s / static_cast<double>(v.n) : s;
      }
    }
  }
  if (node->requires_grad) {
    node->backward = [v, kind, arg](TensorNode& self) {
      auto& p = *self.parents[0];
      const double inv = 1.0 / static_cast<double>(v.n);
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t base = o * v.n * v.inner + i;
          const std::size_t out = o * v.inner + i;
          const double g = self.grad[out];
          if (kind == Reduce::Max) {
            p.grad[base + arg[out] * v.inner] += g;
          } else if (kind == Reduce::Mean) {
            for (std::size_t a = 0; a < v.n; ++a) p.grad[base + a * v.inner] += g * inv;
          } else {
            for (std::size_t a = 0; a < v.n; ++a) p.grad[base + a * v.inner] += g;
          }
        }
      }
    };
  }
  return Tensor::wrap(node);
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, Reduce::Sum); }
Tensor mean(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, Reduce::Mean); }
Tensor max(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, Reduce::Max); }

Tensor sum_all(const Tensor& x) {
  auto node = make_node({1}, {x.node()});
  double s = 0.0;
  for (double v : x.values()) s += v;
  node->value[0] = s;
  if (node->requires_grad) {
    node->backward = [](TensorNode& self) {
      auto& p = *self.parents[0];
      for (double& g : p.grad) g += self.grad[0];
    };
  }
  return Tensor::wrap(node);
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Tensor transpose(const Tensor& x) {
  check_rank2(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto node = make_node({c, r}, {x.node()});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) node->value[j * r + i] = x.values()[i * c + j];
  }
  if (node->requires_grad) {
    node->backward = [r, c](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += self.grad[j * r + i];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor reshape(const Tensor& x, Shape s) {
  if (shape_size(s) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(s));
  }
  auto node = make_node(std::move(s), {x.node()});
  node->value = x.values();
  if (node->requires_grad) {
    node->backward = [](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    };
  }
  return Tensor::wrap(node);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  const std::size_t c = parts[0].dim(1);
  std::size_t rows = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& t : parts) {
    check_rank2(t, "concat_rows");
    if (t.dim(1) != c) throw std::invalid_argument("concat_rows: column counts differ");
    rows += t.dim(0);
    parents.push_back(t.node());
  }
  auto node = make_node({rows, c}, std::move(parents));
  std::size_t off = 0;
  for (const auto& t : parts) {
    std::copy(t.values().begin(), t.values().end(), node->value.begin() + off);
    off += t.size();
  }
  if (node->requires_grad) {
    node->backward = [](TensorNode& self) {
      std::size_t off = 0;
      for (auto& p : self.parents) {
        if (p->requires_grad) {
          for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += self.grad[off + i];
        }
        off += p->value.size();
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  const std::size_t r = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& t : parts) {
    check_rank2(t, "concat_cols");
    if (t.dim(0) != r) throw std::invalid_argument("concat_cols: row counts differ");
    cols += t.dim(1);
    parents.push_back(t.node());
  }
  auto node = make_node({r, cols}, std::move(parents));
  std::size_t off = 0;
  for (const auto& t : parts) {
    const std::size_t c = t.dim(1);
    for (std::size_t i = 0; i < r; ++i) {
      std::copy(t.values().begin() + i * c, t.values().begin() + (i + 1) * c,
                node->value.begin() + i * cols + off);
    }
    off += c;
  }
  if (node->requires_grad) {
    node->backward = [r, cols](TensorNode& self) {
      std::size_t off = 0;
      for (auto& p : self.parents) {
        const std::size_t c = p->value.size() / r;
        if (p->requires_grad) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              p->grad[i * c + j] += self.grad[i * cols + off + j];
            }
          }
        }
        off += c;
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  check_rank2(x, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (start + count > c) throw std::out_of_range("slice_cols: range exceeds columns");
  auto node = make_node({r, count}, {x.node()});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      node->value[i * count + j] = x.values()[i * c + start + j];
    }
  }
  if (node->requires_grad) {
    node->backward = [r, c, start, count](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < count; ++j) {
          p.grad[i * c + start + j] += self.grad[i * count + j];
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor select_row(const Tensor& x, std::size_t row) {
  check_rank2(x, "select_row");
  const std::size_t c = x.dim(1);
  if (row >= x.dim(0)) throw std::out_of_range("select_row: row out of range");
  auto node = make_node({c}, {x.node()});
  std::copy(x.values().begin() + row * c, x.values().begin() + (row + 1) * c, node->value.begin());
  if (node->requires_grad) {
    node->backward = [row, c](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t j = 0; j < c; ++j) p.grad[row * c + j] += self.grad[j];
    };
  }
  return Tensor::wrap(node);
}

Tensor select_col(const Tensor& x, std::size_t col) {
  check_rank2(x, "select_col");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (col >= c) throw std::out_of_range("select_col: column out of range");
  auto node = make_node({r}, {x.node()});
  for (std::size_t i = 0; i < r; ++i) node->value[i] = x.values()[i * c + col];
  if (node->requires_grad) {
    node->backward = [r, c, col](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < r; ++i) p.grad[i * c + col] += self.grad[i];
    };
  }
  return Tensor::wrap(node);
}

namespace {

// Shared kernel for layer_norm (eps > 0) and standardize (eps == 0 with a
// degenerate-deviation cutoff). Normalizes slices of length `n`.
Tensor normalize_impl(const Tensor& x, std::size_t n, double eps, bool zero_when_degenerate) {
  auto node = make_node(x.shape(), {x.node()});
  const std::size_t rows = x.size() / n;
  std::vector<double> inv_sd(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xr[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var + eps);
    if (zero_when_degenerate && sd < 1e-9) {
      // leave this slice at zero with no gradient flow
      inv_sd[r] = 0.0;
      continue;
    }
    inv_sd[r] = 1.0 / sd;
    for (std::size_t i = 0; i < n; ++i) node->value[r * n + i] = (xr[i] - mu) * inv_sd[r];
  }
  if (node->requires_grad) {
    node->backward = [n, inv_sd](TensorNode& self) {
      auto& p = *self.parents[0];
      const std::size_t rows = self.value.size() / n;
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        if (inv_sd[r] == 0.0) continue;
        const double* g = self.grad.data() + r * n;
        const double* y = self.value.data() + r * n;
        double gsum = 0.0, gydot = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          gsum += g[i];
          gydot += g[i] * y[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
          p.grad[r * n + i] += inv_sd[r] * (g[i] - inv_n * gsum - inv_n * gydot * y[i]);
        }
      }
    };
  }
  return Tensor::wrap(node);
}

}  // namespace

Tensor layer_norm(const Tensor& x, double eps) {
  return normalize_impl(x, x.shape().back(), eps, false);
}

Tensor standardize(const Tensor& x) {
  if (x.rank() != 1) {
    throw std::invalid_argument("standardize: expected rank-1, got " + shape_str(x.shape()));
  }
  if (x.dim(0) < 2) throw std::invalid_argument("standardize: need at least 2 values");
  return normalize_impl(x, x.dim(0), 0.0, true);
}

Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids) {
  check_rank2(table, "embedding");
  const std::size_t v = table.dim(0), d = table.dim(1);
  for (std::size_t id : ids) {
    if (id >= v) {
      throw std::out_of_range("embedding: token id " + std::to_string(id) +
                              " outside vocabulary of " + std::to_string(v));
    }
  }
  auto node = make_node({ids.size(), d}, {table.node()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy(table.values().begin() + ids[i] * d, table.values().begin() + (ids[i] + 1) * d,
              node->value.begin() + i * d);
  }
  if (node->requires_grad) {
    node->backward = [ids, d](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) p.grad[ids[i] * d + j] += self.grad[i * d + j];
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty input");
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& t : xs) {
    if (t.shape() != xs[0].shape()) throw std::invalid_argument("mean_of: shapes differ");
    parents.push_back(t.node());
  }
  auto node = make_node(xs[0].shape(), std::move(parents));
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (const auto& t : xs) {
    for (std::size_t i = 0; i < t.size(); ++i) node->value[i] += t.values()[i];
  }
  for (double& v : node->value) v *= inv;
  if (node->requires_grad) {
    node->backward = [inv](TensorNode& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += inv * self.grad[i];
      }
    };
  }
  return Tensor::wrap(node);
}

// ---- pairwise-map primitives ----

namespace {

std::size_t pair_side(const Tensor& pairs) {
  check_rank2(pairs, "pair op");
  const std::size_t nn = pairs.dim(0);
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(nn))));
  if (n * n != nn) {
    throw std::invalid_argument("pair op: row count " + std::to_string(nn) +
                                " is not a perfect square");
  }
  if (n < 2) throw std::invalid_argument("pair op: need at least 2 objects");
  return n;
}

}  // namespace

Tensor add_anchor_rows(const Tensor& pairs, const Tensor& rows) {
  const std::size_t n = pair_side(pairs);
  check_rank2(rows, "add_anchor_rows");
  const std::size_t d = pairs.dim(1);
  if (rows.dim(0) != n || rows.dim(1) != d) {
    throw std::invalid_argument("add_anchor_rows: rows " + shape_str(rows.shape()) +
                                " incompatible with pairs " + shape_str(pairs.shape()));
  }
  auto node = make_node(pairs.shape(), {pairs.node(), rows.node()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t off = (i * n + j) * d;
      for (std::size_t k = 0; k < d; ++k) {
        node->value[off + k] = pairs.values()[off + k] + rows.values()[j * d + k];
      }
    }
  }
  if (node->requires_grad) {
    node->backward = [n, d](TensorNode& self) {
      auto& pp = *self.parents[0];
      auto& pr = *self.parents[1];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t off = (i * n + j) * d;
          for (std::size_t k = 0; k < d; ++k) {
            if (pp.requires_grad) pp.grad[off + k] += self.grad[off + k];
            if (pr.requires_grad) pr.grad[j * d + k] += self.grad[off + k];
          }
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor pair_scores(const Tensor& q, const Tensor& pairs, double scale_factor) {
  const std::size_t n = pair_side(pairs);
  check_rank2(q, "pair_scores");
  const std::size_t d = pairs.dim(1);
  if (q.dim(0) != n || q.dim(1) != d) {
    throw std::invalid_argument("pair_scores: q " + shape_str(q.shape()) +
                                " incompatible with pairs " + shape_str(pairs.shape()));
  }
  auto node = make_node({n, n}, {q.node(), pairs.node()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double acc = 0.0;
      const double* qi = q.values().data() + i * d;
      const double* pij = pairs.values().data() + (i * n + j) * d;
      for (std::size_t k = 0; k < d; ++k) acc += qi[k] * pij[k];
      node->value[i * n + j] = acc * scale_factor;
    }
  }
  if (node->requires_grad) {
    node->backward = [n, d, scale_factor](TensorNode& self) {
      auto& pq = *self.parents[0];
      auto& pp = *self.parents[1];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double g = self.grad[i * n + j] * scale_factor;
          const std::size_t off = (i * n + j) * d;
          for (std::size_t k = 0; k < d; ++k) {
            if (pq.requires_grad) pq.grad[i * d + k] += g * pp.value[off + k];
            if (pp.requires_grad) pp.grad[off + k] += g * pq.value[i * d + k];
          }
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor masked_row_softmax(const Tensor& scores) {
  check_rank2(scores, "masked_row_softmax");
  const std::size_t n = scores.dim(0);
  if (scores.dim(1) != n) throw std::invalid_argument("masked_row_softmax: expected square input");
  if (n < 2) throw std::invalid_argument("masked_row_softmax: need at least one anchor");
  auto node = make_node({n, n}, {scores.node()});
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, scores.values()[i * n + j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double e = std::exp(scores.values()[i * n + j] - m);
      node->value[i * n + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) node->value[i * n + j] /= s;
    }
  }
  if (node->requires_grad) {
    node->backward = [n](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) dot += self.grad[i * n + j] * self.value[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          p.grad[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor weighted_pair_sum(const Tensor& w, const Tensor& pairs) {
  const std::size_t n = pair_side(pairs);
  const std::size_t d = pairs.dim(1);
  if (w.rank() != 2 || w.dim(0) != n || w.dim(1) != n) {
    throw std::invalid_argument("weighted_pair_sum: weights " + shape_str(w.shape()) +
                                " incompatible with pairs " + shape_str(pairs.shape()));
  }
  auto node = make_node({n, d}, {w.node(), pairs.node()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double wij = w.values()[i * n + j];
      if (wij == 0.0) continue;
      const double* pij = pairs.values().data() + (i * n + j) * d;
      double* out = node->value.data() + i * d;
      for (std::size_t k = 0; k < d; ++k) out[k] += wij * pij[k];
    }
  }
  if (node->requires_grad) {
    node->backward = [n, d](TensorNode& self) {
      auto& pw = *self.parents[0];
      auto& pp = *self.parents[1];
      for (std::size_t i = 0; i < n; ++i) {
        const double* g = self.grad.data() + i * d;
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t off = (i * n + j) * d;
          if (pw.requires_grad) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) acc += g[k] * pp.value[off + k];
            pw.grad[i * n + j] += acc;
          }
          if (pp.requires_grad) {
            const double wij = pw.value[i * n + j];
            if (wij != 0.0) {
              for (std::size_t k = 0; k < d; ++k) pp.grad[off + k] += wij * g[k];
            }
          }
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor masked_pair_max(const Tensor& pairs) {
  const std::size_t n = pair_side(pairs);
  const std::size_t d = pairs.dim(1);
  auto node = make_node({n, d}, {pairs.node()});
  std::vector<std::size_t> arg(n * d, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t bj = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double v = pairs.values()[(i * n + j) * d + k];
        if (v > best) {
          best = v;
          bj = j;
        }
      }
      node->value[i * d + k] = best;
      arg[i * d + k] = bj;
    }
  }
  if (node->requires_grad) {
    node->backward = [n, d, arg](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
          p.grad[(i * n + arg[i * d + k]) * d + k] += self.grad[i * d + k];
        }
      }
    };
  }
  return Tensor::wrap(node);
}

Tensor masked_pair_mean(const Tensor& pairs) {
  const std::size_t n = pair_side(pairs);
  const std::size_t d = pairs.dim(1);
  auto node = make_node({n, d}, {pairs.node()});
  const double inv = 1.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* pij = pairs.values().data() + (i * n + j) * d;
      double* out = node->value.data() + i * d;
      for (std::size_t k = 0; k < d; ++k) out[k] += pij[k] * inv;
    }
  }
  if (node->requires_grad) {
    node->backward = [n, d, inv](TensorNode& self) {
      auto& p = *self.parents[0];
      for (std::size_t i = 0; i < n; ++i) {
        const double* g = self.grad.data() + i * d;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          double* pg = p.grad.data() + (i * n + j) * d;
          for (std::size_t k = 0; k < d; ++k) pg[k] += g[k] * inv;
        }
      }
    };
  }
  return Tensor::wrap(node);
}

// ---- backward ----

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Post-order DFS for a topological ordering.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace vg3d

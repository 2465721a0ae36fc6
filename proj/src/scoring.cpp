#include "vg3d/scoring.hpp"

#include <stdexcept>

namespace vg3d {

CategoryClassifier CategoryClassifier::init(std::size_t d_model, std::size_t n_categories,
                                            Rng& rng) {
  CategoryClassifier c;
  c.l1 = Linear::init(d_model, d_model, rng, true);
  c.l2 = Linear::init(d_model, n_categories, rng, true);
  return c;
}

Tensor CategoryClassifier::operator()(const Tensor& objs) const { return l2(relu(l1(objs))); }

void CategoryClassifier::collect(ParamSet& ps, const std::string& prefix) const {
  l1.collect(ps, prefix + ".l1");
  l2.collect(ps, prefix + ".l2");
}

SpatialScoreHead SpatialScoreHead::init(std::size_t d_model, Rng& rng) {
  SpatialScoreHead h;
  h.lin = Linear::init(d_model, 1, rng, true);
  return h;
}

Tensor SpatialScoreHead::operator()(const Tensor& objs) const {
  Tensor out = lin(objs);  // [n, 1]
  return reshape(out, {out.dim(0)});
}

void SpatialScoreHead::collect(ParamSet& ps, const std::string& prefix) const {
  lin.collect(ps, prefix + ".lin");
}

std::size_t argmax_index(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("argmax_index: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

Tensor extract_target_scores(const Tensor& category_matrix, const Tensor& text_logits) {
  if (category_matrix.rank() != 2 || text_logits.rank() != 1 ||
      category_matrix.dim(1) != text_logits.dim(0)) {
    throw std::invalid_argument("extract_target_scores: matrix " +
                                shape_str(category_matrix.shape()) + " vs logits " +
                                shape_str(text_logits.shape()));
  }
  return select_col(category_matrix, argmax_index(text_logits.values()));
}

Tensor normalize_logits(const Tensor& logits) {
  if (logits.rank() != 1 || logits.dim(0) < 2) {
    throw std::invalid_argument("normalize_logits: need at least 2 logits, got " +
                                shape_str(logits.shape()));
  }
  return standardize(logits);
}

Tensor fuse_predictions(const Tensor& f1, const Tensor& f2, double lambda, double mu) {
  if (f1.shape() != f2.shape()) {
    throw std::invalid_argument("fuse_predictions: branch lengths differ, " +
                                shape_str(f1.shape()) + " vs " + shape_str(f2.shape()));
  }
  Tensor g1 = normalize_logits(f1.detach());
  Tensor g2 = normalize_logits(f2);
  return add(scale(g1, lambda), scale(g2, mu));
}

}  // namespace vg3d

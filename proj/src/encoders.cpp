#include "vg3d/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace vg3d {

PointEncoder PointEncoder::init(std::size_t d_model, Rng& rng) {
  PointEncoder e;
  e.pre1 = Linear::init(6, d_model, rng, true);
  e.pre2 = Linear::init(d_model, d_model, rng, true);
  e.post1 = Linear::init(d_model, d_model, rng, true);
  e.post2 = Linear::init(d_model, d_model, rng, true);
  return e;
}

Tensor PointEncoder::operator()(const Tensor& points, std::size_t n_objects) const {
  if (points.rank() != 2 || points.dim(1) != 6) {
    throw std::invalid_argument("PointEncoder: expected [n*k, 6] points, got " +
                                shape_str(points.shape()));
  }
  if (n_objects == 0 || points.dim(0) == 0 || points.dim(0) % n_objects != 0) {
    throw std::invalid_argument("PointEncoder: empty point set or uneven object sizes");
  }
  const std::size_t k = points.dim(0) / n_objects;
  const std::size_t d = pre1.w.dim(1);
  Tensor per_point = relu(pre2(relu(pre1(points))));
  Tensor pooled = max(reshape(per_point, {n_objects, k, d}), 1);  // [n, d]
  return post2(relu(post1(pooled)));
}

void PointEncoder::collect(ParamSet& ps, const std::string& prefix) const {
  pre1.collect(ps, prefix + ".pre1");
  pre2.collect(ps, prefix + ".pre2");
  post1.collect(ps, prefix + ".post1");
  post2.collect(ps, prefix + ".post2");
}

Tensor scene_points_tensor(const Scene& scene) {
  if (scene.size() == 0) throw std::invalid_argument("scene_points_tensor: empty scene");
  const std::size_t k = scene.objects[0].points.size();
  std::vector<double> flat;
  flat.reserve(scene.size() * k * 6);
  for (const auto& obj : scene.objects) {
    if (obj.points.size() != k) {
      throw std::invalid_argument("scene_points_tensor: objects must share a point count");
    }
    for (const auto& p : obj.points) flat.insert(flat.end(), p.begin(), p.end());
  }
  return Tensor::from_data({scene.size() * k, 6}, std::move(flat));
}

SceneAttentionOut scene_attention(const Tensor& objs, const Tensor& wq, const Tensor& wk,
                                  const Tensor& wv) {
  Tensor q = matmul(objs, wq);
  Tensor k = matmul(objs, wk);
  Tensor v = matmul(objs, wv);
  Tensor weights = softmax(matmul(q, transpose(k)), 1);  // unscaled logits
  return {matmul(weights, v), weights};
}

SceneAwareEncoder SceneAwareEncoder::init(std::size_t d_model, std::size_t n_layers, Rng& rng) {
  SceneAwareEncoder enc;
  const double s = 1.0 / std::sqrt(static_cast<double>(d_model));
  for (std::size_t l = 0; l < n_layers; ++l) {
    Layer layer;
    layer.wq = Tensor::randn({d_model, d_model}, rng, s, true);
    layer.wk = Tensor::randn({d_model, d_model}, rng, s, true);
    layer.wv = Tensor::randn({d_model, d_model}, rng, s, true);
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

Tensor SceneAwareEncoder::operator()(const Tensor& objs) const {
  Tensor x = objs;
  for (const auto& layer : layers) {
    SceneAttentionOut out = scene_attention(x, layer.wq, layer.wk, layer.wv);
    x = layer_norm(add(x, out.attended));
  }
  return x;
}

void SceneAwareEncoder::collect(ParamSet& ps, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    ps.push_back({p + ".wq", layers[l].wq});
    ps.push_back({p + ".wk", layers[l].wk});
    ps.push_back({p + ".wv", layers[l].wv});
  }
}

namespace {

Tensor sinusoidal_positions(std::size_t length, std::size_t d) {
  std::vector<double> data(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) /
                                                 static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      data[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from_data({length, d}, std::move(data));
}

}  // namespace

TextEncoder TextEncoder::init(std::size_t vocab_size, std::size_t d_text, std::size_t n_layers,
                              std::size_t n_heads, Rng& rng) {
  TextEncoder enc;
  enc.embed = Tensor::randn({vocab_size, d_text}, rng, 0.5, true);
  for (std::size_t l = 0; l < n_layers; ++l) {
    Layer layer;
    layer.attn = Attention::init(d_text, d_text, d_text, n_heads, rng);
    layer.ff = FeedForward::init(d_text, rng);
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

Tensor TextEncoder::operator()(const std::vector<std::size_t>& tokens) const {
  if (tokens.size() < 2) {
    throw std::invalid_argument("TextEncoder: need the classification token plus content");
  }
  const std::size_t d = embed.dim(1);
  Tensor x = add(embedding(embed, tokens), sinusoidal_positions(tokens.size(), d));
  for (const auto& layer : layers) {
    x = layer_norm(add(x, layer.attn(x, x)));
    x = layer_norm(add(x, layer.ff(x)));
  }
  return x;
}

void TextEncoder::collect(ParamSet& ps, const std::string& prefix) const {
  ps.push_back({prefix + ".embed", embed});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    layers[l].attn.collect(ps, p + ".attn");
    layers[l].ff.collect(ps, p + ".ff");
  }
}

TextCategoryHead TextCategoryHead::init(std::size_t d_text, std::size_t n_categories, Rng& rng) {
  TextCategoryHead h;
  h.l1 = Linear::init(d_text, d_text, rng, true);
  h.l2 = Linear::init(d_text, n_categories, rng, true);
  return h;
}

Tensor TextCategoryHead::operator()(const Tensor& cls) const {
  Tensor row = reshape(cls, {1, cls.size()});
  Tensor out = l2(relu(l1(row)));
  return reshape(out, {out.size()});
}

void TextCategoryHead::collect(ParamSet& ps, const std::string& prefix) const {
  l1.collect(ps, prefix + ".l1");
  l2.collect(ps, prefix + ".l2");
}

}  // namespace vg3d

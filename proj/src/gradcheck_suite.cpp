#include <cmath>
#include <memory>

#include "vg3d/encoders.hpp"
#include "vg3d/fusion.hpp"
#include "vg3d/gradcheck.hpp"
#include "vg3d/model.hpp"
#include "vg3d/scoring.hpp"
#include "vg3d/spatial.hpp"
#include "vg3d/train.hpp"

namespace vg3d {

namespace {

// Random leaf in [-2, 2], nudged away from zero so ReLU and max kinks sit
// farther than the probe step from any boundary.
Tensor leaf(Shape s, Rng& rng) {
  Tensor t = Tensor::uniform(std::move(s), rng, -2.0, 2.0, true);
  for (double& v : t.leaf_values()) {
    if (std::fabs(v) < 0.05) v += v >= 0.0 ? 0.1 : -0.1;
  }
  return t;
}

// Fixed mixing vector so every output entry contributes to the scalar loss
// with a distinct weight.
Tensor mixer(const Tensor& like, Rng& rng) {
  return Tensor::uniform(like.shape(), rng, -1.0, 1.0, false);
}

GradCheckCase unary_case(const std::string& name, Shape in_shape,
                         std::function<Tensor(const Tensor&)> op) {
  Rng rng(std::hash<std::string>{}(name));
  GradCheckCase c;
  c.name = name;
  c.params.push_back({"x", leaf(std::move(in_shape), rng)});
  Tensor probe = op(c.params[0].tensor);
  Tensor mix = mixer(probe, rng);
  c.build_loss = [op, mix](ParamSet& ps) { return sum_all(mul(op(ps[0].tensor), mix)); };
  return c;
}

GradCheckCase binary_case(const std::string& name, Shape a_shape, Shape b_shape,
                          std::function<Tensor(const Tensor&, const Tensor&)> op) {
  Rng rng(std::hash<std::string>{}(name));
  GradCheckCase c;
  c.name = name;
  c.params.push_back({"a", leaf(std::move(a_shape), rng)});
  c.params.push_back({"b", leaf(std::move(b_shape), rng)});
  Tensor probe = op(c.params[0].tensor, c.params[1].tensor);
  Tensor mix = mixer(probe, rng);
  c.build_loss = [op, mix](ParamSet& ps) {
    return sum_all(mul(op(ps[0].tensor, ps[1].tensor), mix));
  };
  return c;
}

GroundingSample tiny_fixture(Rng& rng) {
  SceneConfig sc;
  sc.n_objects = 3;
  sc.n_categories = 4;
  sc.points_per_object = 8;
  const Vocabulary vocab = Vocabulary::standard(4);
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      Scene scene = generate_scene(rng, sc);
      return generate_utterance(scene, rng, vocab);
    } catch (const GenerationError&) {
      if (attempt > 100) throw;
    }
  }
}

}  // namespace

GradCheckSuite default_grad_suite() {
  GradCheckSuite suite;

  suite.add(binary_case("matmul", {3, 4}, {4, 2},
                        [](const Tensor& a, const Tensor& b) { return matmul(a, b); }));
  suite.add(binary_case("add", {2, 3}, {2, 3},
                        [](const Tensor& a, const Tensor& b) { return add(a, b); }));
  suite.add(binary_case("sub", {2, 3}, {2, 3},
                        [](const Tensor& a, const Tensor& b) { return sub(a, b); }));
  suite.add(binary_case("mul", {2, 3}, {2, 3},
                        [](const Tensor& a, const Tensor& b) { return mul(a, b); }));
  suite.add(unary_case("scale", {3, 3}, [](const Tensor& x) { return scale(x, 1.37); }));
  suite.add(binary_case("add_bias", {3, 4}, {4},
                        [](const Tensor& a, const Tensor& b) { return add_bias(a, b); }));
  suite.add(unary_case("relu", {3, 3}, [](const Tensor& x) { return relu(x); }));
  suite.add(unary_case("softmax_axis1", {3, 4}, [](const Tensor& x) { return softmax(x, 1); }));
  suite.add(unary_case("softmax_axis0", {3, 4}, [](const Tensor& x) { return softmax(x, 0); }));
  suite.add(unary_case("cross_entropy", {5}, [](const Tensor& x) { return cross_entropy(x, 2); }));
  suite.add(unary_case("cross_entropy_rows", {3, 4}, [](const Tensor& x) {
    return cross_entropy_rows(x, {0, 2, 3});
  }));
  suite.add(unary_case("sum_axis", {2, 3, 2}, [](const Tensor& x) { return sum(x, 1); }));
  suite.add(unary_case("mean_axis", {2, 3, 2}, [](const Tensor& x) { return mean(x, 1); }));
  suite.add(unary_case("max_axis", {2, 3, 2}, [](const Tensor& x) { return max(x, 1); }));
  suite.add(unary_case("sum_all", {3, 3}, [](const Tensor& x) { return sum_all(x); }));
  suite.add(unary_case("mean_all", {3, 3}, [](const Tensor& x) { return mean_all(x); }));
  suite.add(unary_case("transpose", {3, 4}, [](const Tensor& x) { return transpose(x); }));
  suite.add(unary_case("reshape", {3, 4}, [](const Tensor& x) { return reshape(x, {2, 6}); }));
  suite.add(binary_case("concat_rows", {2, 3}, {3, 3}, [](const Tensor& a, const Tensor& b) {
    return concat_rows({a, b});
  }));
  suite.add(binary_case("concat_cols", {3, 2}, {3, 3}, [](const Tensor& a, const Tensor& b) {
    return concat_cols({a, b});
  }));
  suite.add(unary_case("slice_cols", {3, 5}, [](const Tensor& x) { return slice_cols(x, 1, 3); }));
  suite.add(unary_case("select_row", {3, 4}, [](const Tensor& x) { return select_row(x, 1); }));
  suite.add(unary_case("select_col", {3, 4}, [](const Tensor& x) { return select_col(x, 2); }));
  suite.add(unary_case("layer_norm", {3, 5}, [](const Tensor& x) { return layer_norm(x); }));
  suite.add(unary_case("standardize", {6}, [](const Tensor& x) { return standardize(x); }));
  suite.add(unary_case("embedding", {7, 4}, [](const Tensor& x) {
    return embedding(x, {1, 3, 3, 0});
  }));
  {
    Rng rng(0x30f1ULL);
    GradCheckCase c;
    c.name = "mean_of";
    c.params.push_back({"a", leaf({2, 3}, rng)});
    c.params.push_back({"b", leaf({2, 3}, rng)});
    c.params.push_back({"c", leaf({2, 3}, rng)});
    Tensor mix = Tensor::uniform({2, 3}, rng, -1.0, 1.0, false);
    c.build_loss = [mix](ParamSet& ps) {
      return sum_all(mul(mean_of({ps[0].tensor, ps[1].tensor, ps[2].tensor}), mix));
    };
    suite.add(std::move(c));
  }
  suite.add(binary_case("add_anchor_rows", {9, 4}, {3, 4},
                        [](const Tensor& p, const Tensor& r) { return add_anchor_rows(p, r); }));
  suite.add(binary_case("pair_scores", {3, 4}, {9, 4}, [](const Tensor& q, const Tensor& p) {
    return pair_scores(q, p, 0.5);
  }));
  suite.add(unary_case("masked_row_softmax", {4, 4},
                       [](const Tensor& x) { return masked_row_softmax(x); }));
  suite.add(binary_case("weighted_pair_sum", {3, 3}, {9, 4},
                        [](const Tensor& w, const Tensor& p) { return weighted_pair_sum(w, p); }));
  suite.add(unary_case("masked_pair_max", {9, 4},
                       [](const Tensor& x) { return masked_pair_max(x); }));
  suite.add(unary_case("masked_pair_mean", {9, 4},
                       [](const Tensor& x) { return masked_pair_mean(x); }));

  // composite paths
  {
    Rng rng(0xa11ceULL);
    GradCheckCase c;
    c.name = "scene_attention_layer";
    c.params.push_back({"objs", leaf({3, 6}, rng)});
    c.params.push_back({"wq", Tensor::randn({6, 6}, rng, 0.4, true)});
    c.params.push_back({"wk", Tensor::randn({6, 6}, rng, 0.4, true)});
    c.params.push_back({"wv", Tensor::randn({6, 6}, rng, 0.4, true)});
    Tensor mix = Tensor::uniform({3, 6}, rng, -1.0, 1.0, false);
    c.build_loss = [mix](ParamSet& ps) {
      auto out = scene_attention(ps[0].tensor, ps[1].tensor, ps[2].tensor, ps[3].tensor);
      return sum_all(mul(layer_norm(add(ps[0].tensor, out.attended)), mix));
    };
    suite.add(std::move(c));
  }
  {
    Rng rng(0xc0deULL);
    GradCheckCase c;
    c.name = "cross_attention";
    Attention attn = Attention::init(6, 5, 6, 1, rng);
    c.params.push_back({"q", leaf({3, 6}, rng)});
    c.params.push_back({"m", leaf({4, 5}, rng)});
    attn.collect(c.params, "attn");
    Tensor mix = Tensor::uniform({3, 6}, rng, -1.0, 1.0, false);
    c.build_loss = [attn, mix](ParamSet& ps) {
      return sum_all(mul(attn(ps[0].tensor, ps[1].tensor), mix));
    };
    suite.add(std::move(c));
  }
  {
    Rng rng(0x90177ULL);
    GradCheckCase c;
    c.name = "point_encoder";
    PointEncoder enc = PointEncoder::init(8, rng);
    c.params.push_back({"points", leaf({10, 6}, rng)});
    enc.collect(c.params, "enc");
    Tensor mix = Tensor::uniform({2, 8}, rng, -1.0, 1.0, false);
    c.build_loss = [enc, mix](ParamSet& ps) { return sum_all(mul(enc(ps[0].tensor, 2), mix)); };
    suite.add(std::move(c));
  }
  {
    Rng rng(0x7e47ULL);
    GradCheckCase c;
    c.name = "text_encoder";
    TextEncoder enc = TextEncoder::init(9, 8, 2, 1, rng);
    enc.collect(c.params, "enc");
    Tensor mix = Tensor::uniform({4, 8}, rng, -1.0, 1.0, false);
    c.build_loss = [enc, mix](ParamSet& ps) { return sum_all(mul(enc({0, 3, 5, 2}), mix)); };
    suite.add(std::move(c));
  }
  {
    Rng rng(0x5047ULL);
    GradCheckCase c;
    c.name = "spatial_projector";
    SpatialProjector proj = SpatialProjector::init(8, rng);
    c.params.push_back({"features", leaf({9, kSpatialFeatureDim}, rng)});
    proj.collect(c.params, "proj");
    Tensor mix = Tensor::uniform({9, 8}, rng, -1.0, 1.0, false);
    c.build_loss = [proj, mix](ParamSet& ps) { return sum_all(mul(proj(ps[0].tensor), mix)); };
    suite.add(std::move(c));
  }
  {
    Rng rng(0x7057ULL);
    GradCheckCase c;
    c.name = "text_spatial_fusion";
    TextSpatialFusion fuse = TextSpatialFusion::init(8, 6, 1, rng);
    c.params.push_back({"maps", leaf({9, 8}, rng)});
    c.params.push_back({"text", leaf({4, 6}, rng)});
    fuse.collect(c.params, "fuse");
    Tensor mix = Tensor::uniform({9, 8}, rng, -1.0, 1.0, false);
    c.build_loss = [fuse, mix](ParamSet& ps) {
      return sum_all(mul(fuse(ps[0].tensor, ps[1].tensor), mix));
    };
    suite.add(std::move(c));
  }
  {
    Rng rng(0xf0517ULL);
    GradCheckCase c;
    c.name = "fusion_layer";
    FusionModule fusion = FusionModule::init(8, 6, 1, 1, Aggregation::kAttention, rng);
    c.params.push_back({"objs", leaf({3, 8}, rng)});
    c.params.push_back({"maps", leaf({9, 8}, rng)});
    c.params.push_back({"text", leaf({4, 6}, rng)});
    fusion.collect(c.params, "fusion");
    Tensor mix = Tensor::uniform({3, 8}, rng, -1.0, 1.0, false);
    c.build_loss = [fusion, mix](ParamSet& ps) {
      return sum_all(
          mul(fusion.forward(ps[0].tensor, {ps[1].tensor}, ps[2].tensor, nullptr), mix));
    };
    suite.add(std::move(c));
  }
  {
    // End-to-end composite loss on a 3-object fixture. The category branch
    // enters the reference term through a stop-gradient, so the numeric
    // probe must hold it at its base value: that frozen branch is exactly
    // what the analytic gradient differentiates.
    Rng rng(0xe2eULL);
    GradCheckCase c;
    c.name = "end_to_end_loss";
    ModelConfig mc;
    mc.n_categories = 4;
    mc.vocab_size = Vocabulary::standard(4).size();
    mc.d_model = 16;
    mc.d_text = 16;
    mc.sa_layers = 1;
    mc.text_layers = 1;
    mc.fusion_layers = 2;
    mc.n_rotations = 2;
    auto model = std::make_shared<GroundingModel>(mc, rng);
    GroundingSample sample = tiny_fixture(rng);
    c.params = model->params();
    c.probes_per_param = 6;
    LossWeights w;
    auto frozen_scores = std::make_shared<std::vector<double>>();
    c.build_loss = [model, sample, w, frozen_scores](ParamSet&) {
      ModelOutput out = model->forward(sample);
      if (frozen_scores->empty()) *frozen_scores = out.target_scores.values();
      Tensor frozen = Tensor::from_data(out.target_scores.shape(), *frozen_scores);
      Tensor fused = fuse_predictions(frozen, out.spatial_logits, model->config().lambda,
                                      model->config().mu);
      std::vector<std::size_t> cats;
      for (const auto& o : sample.scene.objects) cats.push_back(o.category_id);
      Tensor loss = cross_entropy(fused, sample.target_index);
      loss = add(loss, scale(cross_entropy(out.text_logits, sample.target_category_id), w.alpha));
      loss = add(loss, scale(cross_entropy_rows(out.cat_scores_raw, cats), w.beta));
      loss = add(loss, scale(cross_entropy_rows(out.cat_scores_sa, cats), w.gamma));
      return loss;
    };
    suite.add(std::move(c));
  }

  return suite;
}

}  // namespace vg3d

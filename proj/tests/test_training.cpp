#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "vg3d/config.hpp"
#include "vg3d/train.hpp"

using namespace vg3d;

namespace {

// Independent scalar cross-entropy for the fixture arithmetic.
double ce_oracle(const std::vector<double>& logits, std::size_t target) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - m);
  return m + std::log(denom) - logits[target];
}

ModelConfig tiny_model_config(const Vocabulary& vocab) {
  ModelConfig mc;
  mc.n_categories = vocab.categories.size();
  mc.vocab_size = vocab.size();
  mc.d_model = 16;
  mc.d_text = 16;
  mc.sa_layers = 1;
  mc.text_layers = 1;
  mc.fusion_layers = 2;
  mc.n_rotations = 2;
  return mc;
}

Dataset tiny_dataset(std::uint64_t seed, std::size_t n) {
  DatasetGenConfig cfg;
  cfg.n_objects_min = 3;
  cfg.n_objects_max = 5;
  cfg.scene.points_per_object = 12;
  return generate_dataset(seed, n, cfg);
}

}  // namespace

TEST_CASE("composite loss assembles the four weighted terms") {
  Dataset ds = tiny_dataset(301, 3);
  Rng rng(302);
  GroundingModel model(tiny_model_config(ds.vocabulary), rng);
  const GroundingSample& sample = ds.samples[0];
  ModelOutput out = model.forward(sample);

  LossWeights ref_only{0.0, 0.0, 0.0};
  const double l_ref = composite_loss(out, sample, ref_only).item();
  CHECK(l_ref == doctest::Approx(ce_oracle(out.fused.values(), sample.target_index))
                     .epsilon(1e-12));

  // hand-computed sum of the four terms on the fixture
  std::vector<std::size_t> cats;
  for (const auto& o : sample.scene.objects) cats.push_back(o.category_id);
  auto row_ce_mean = [&](const Tensor& m) {
    double acc = 0.0;
    for (std::size_t r = 0; r < m.dim(0); ++r) {
      std::vector<double> row(m.dim(1));
      for (std::size_t c = 0; c < m.dim(1); ++c) row[c] = m.at2(r, c);
      acc += ce_oracle(row, cats[r]);
    }
    return acc / static_cast<double>(m.dim(0));
  };
  const double l_text = ce_oracle(out.text_logits.values(), sample.target_category_id);
  const double l_obj = row_ce_mean(out.cat_scores_raw);
  const double l_obj_scene = row_ce_mean(out.cat_scores_sa);

  LossWeights w{0.5, 1.0, 0.5};
  const double expect = l_ref + 0.5 * l_text + 1.0 * l_obj + 0.5 * l_obj_scene;
  CHECK(composite_loss(out, sample, w).item() == doctest::Approx(expect).epsilon(1e-12));

  // doubling alpha exactly doubles the text contribution
  LossWeights w2{1.0, 1.0, 0.5};
  const double with_a = composite_loss(out, sample, w).item();
  const double with_2a = composite_loss(out, sample, w2).item();
  const double base = composite_loss(out, sample, LossWeights{0.0, 1.0, 0.5}).item();
  CHECK(with_2a - base == doctest::Approx(2.0 * (with_a - base)).epsilon(1e-9));

  CHECK_THROWS_AS(composite_loss(out, sample, LossWeights{-0.1, 1.0, 0.5}),
                  std::invalid_argument);
}

TEST_CASE("reference loss alone leaves the category classifier untouched") {
  Dataset ds = tiny_dataset(310, 1);
  Rng rng(311);
  GroundingModel model(tiny_model_config(ds.vocabulary), rng);
  ParamSet params = model.params();
  zero_grads(params);

  ModelOutput out = model.forward(ds.samples[0]);
  backward(composite_loss(out, ds.samples[0], LossWeights{0.0, 0.0, 0.0}));

  double classifier_grad = 0.0;
  double other_grad = 0.0;
  for (const auto& p : params) {
    double norm = 0.0;
    for (double g : p.tensor.grad()) norm += std::fabs(g);
    if (p.name.rfind("classifier.", 0) == 0) {
      classifier_grad += norm;
    } else {
      other_grad += norm;
    }
  }
  CHECK(classifier_grad == 0.0);
  CHECK(other_grad > 0.0);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Dataset ds = tiny_dataset(320, 10);
  Rng rng(321);
  GroundingModel model(tiny_model_config(ds.vocabulary), rng);
  const Checkpoint before = model.snapshot();

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 0.0;
  cfg.seed = 5;
  AdamState opt;
  train(model, opt, ds, nullptr, cfg);

  const Checkpoint after = model.snapshot();
  for (const auto& [name, entry] : before) {
    CHECK(after.at(name).data == entry.data);
  }
}

TEST_CASE("a single repeated sample is overfit monotonically") {
  Dataset ds = tiny_dataset(330, 1);
  Rng rng(331);
  GroundingModel model(tiny_model_config(ds.vocabulary), rng);
  ParamSet params = model.params();
  AdamState opt = AdamState::init(params);
  AdamConfig adam;
  adam.lr = 5e-5;  // small enough that every sign-scaled step descends
  const GroundingSample& sample = ds.samples[0];
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 50; ++step) {
    Tensor loss = composite_loss(model.forward(sample), sample, {});
    CHECK(loss.item() < prev);
    prev = loss.item();
    zero_grads(params);
    backward(loss);
    adam_step(params, opt, adam);
  }
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  Dataset ds = tiny_dataset(340, 12);
  auto run = [&ds] {
    Rng rng(341);
    GroundingModel model(tiny_model_config(ds.vocabulary), rng);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 17;
    AdamState opt;
    train(model, opt, ds, nullptr, cfg);
    return model.snapshot();
  };
  const Checkpoint a = run();
  const Checkpoint b = run();
  REQUIRE(a.size() == b.size());
  for (const auto& [name, entry] : a) {
    CHECK(b.at(name).data == entry.data);
  }
}

TEST_CASE("resuming a checkpoint replays the same trajectory") {
  Dataset ds = tiny_dataset(350, 10);
  const std::string dir = "resume_test_ckpts";

  Rng rng_full(351);
  GroundingModel full(tiny_model_config(ds.vocabulary), rng_full);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 5;
  cfg.seed = 9;
  AdamState opt_full;
  train(full, opt_full, ds, nullptr, cfg);

  Rng rng_half(351);
  GroundingModel half(tiny_model_config(ds.vocabulary), rng_half);
  TrainConfig first_half = cfg;
  first_half.epochs = 2;
  first_half.checkpoint_dir = dir;
  AdamState opt_half;
  train(half, opt_half, ds, nullptr, first_half);

  Rng rng_res(999);  // init irrelevant, restored below
  GroundingModel resumed(tiny_model_config(ds.vocabulary), rng_res);
  AdamState opt_res;
  const std::size_t done =
      restore_training(resumed, opt_res, load_checkpoint(dir + "/epoch_2.ckpt"));
  CHECK(done == 2);
  train(resumed, opt_res, ds, nullptr, cfg, done);

  const Checkpoint want = full.snapshot();
  const Checkpoint got = resumed.snapshot();
  for (const auto& [name, entry] : want) {
    CHECK(got.at(name).data == entry.data);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("metrics partition the dataset and reward perfect predictions") {
  std::vector<SampleRecord> records;
  Rng rng(360);
  for (int i = 0; i < 40; ++i) {
    SampleRecord r;
    r.target = rng.index(4);
    r.predicted = r.target;  // injected perfect predictions
    r.correct = true;
    r.hard = i % 3 == 0;
    r.view_dependent = i % 2 == 0;
    r.category_rank = 1 + rng.index(3);
    r.spatial_rank = 1;
    r.objects_correct = 5;
    r.objects_total = 5;
    records.push_back(r);
  }
  Metrics m = compute_metrics(records);
  CHECK(m.overall == 1.0);
  CHECK(m.easy == 1.0);
  CHECK(m.hard == 1.0);
  CHECK(m.vd == 1.0);
  CHECK(m.vi == 1.0);
  CHECK(m.per_object_accuracy == 1.0);
  CHECK(m.n_easy + m.n_hard == m.n_total);
  CHECK(m.n_vd + m.n_vi == m.n_total);
  CHECK(m.spatial_when_correct.top1 == 1.0);
  CHECK(m.category_when_correct.count == 40);
  CHECK(m.category_when_incorrect.count == 0);
}

TEST_CASE("an untrained model sits at chance level") {
  Dataset ds = tiny_dataset(370, 150);
  Rng rng(371);
  GroundingModel model(tiny_model_config(ds.vocabulary), rng);
  EvalResult ev = evaluate(model, ds);

  double uniform_chance = 0.0;    // guessing over all objects
  double category_chance = 0.0;   // guessing within the target category
  for (const auto& s : ds.samples) {
    uniform_chance += 1.0 / static_cast<double>(s.scene.size());
    category_chance += 1.0 / static_cast<double>(s.distractor_count + 1);
  }
  uniform_chance /= static_cast<double>(ds.samples.size());
  category_chance /= static_cast<double>(ds.samples.size());

  // far below the trained bar, consistent with uninformed guessing
  CHECK(ev.metrics.overall < category_chance + 0.15);
  CHECK(ev.metrics.overall > 0.0);
  CHECK(std::fabs(ev.metrics.overall - uniform_chance) < 0.2);
}

TEST_CASE("evaluation is deterministic") {
  Dataset ds = tiny_dataset(380, 20);
  Rng rng(381);
  GroundingModel model(tiny_model_config(ds.vocabulary), rng);
  EvalResult a = evaluate(model, ds);
  EvalResult b = evaluate(model, ds);
  CHECK(metrics_json(a.metrics) == metrics_json(b.metrics));
  CHECK(records_json(a.records, false) == records_json(b.records, false));
}

TEST_CASE("divergence aborts with a diagnostic") {
  Dataset ds = tiny_dataset(390, 4);
  Rng rng(391);
  GroundingModel model(tiny_model_config(ds.vocabulary), rng);
  ParamSet params = model.params();
  // poison the spatial head so the NaN reaches the loss directly
  for (auto& p : params) {
    if (p.name == "spatial_head.lin.w") p.tensor.leaf_values()[0] =
        std::numeric_limits<double>::quiet_NaN();
  }
  TrainConfig cfg;
  cfg.epochs = 1;
  AdamState opt;
  CHECK_THROWS_AS(train(model, opt, ds, nullptr, cfg), TrainingDivergence);
}

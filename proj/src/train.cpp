#include "vg3d/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace vg3d {

namespace {

using json = nlohmann::ordered_json;

// 1-based rank of entry `target`; larger scores rank first, earlier index
// wins ties.
std::size_t rank_of(const std::vector<double>& scores, std::size_t target) {
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > scores[target]) ++rank;
    if (j < target && scores[j] == scores[target]) ++rank;
  }
  return rank;
}

json topk_json(const TopKRates& t) {
  return json{{"top1", t.top1}, {"top3", t.top3}, {"top6", t.top6}, {"count", t.count}};
}

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

Tensor composite_loss(const ModelOutput& out, const GroundingSample& sample,
                      const LossWeights& w) {
  w.validate();
  if (sample.target_index >= sample.scene.size()) {
    throw std::invalid_argument("composite_loss: target index out of range");
  }
  std::vector<std::size_t> object_cats;
  object_cats.reserve(sample.scene.size());
  for (const auto& o : sample.scene.objects) object_cats.push_back(o.category_id);

  Tensor loss = cross_entropy(out.fused, sample.target_index);
  loss = add(loss, scale(cross_entropy(out.text_logits, sample.target_category_id), w.alpha));
  loss = add(loss, scale(cross_entropy_rows(out.cat_scores_raw, object_cats), w.beta));
  loss = add(loss, scale(cross_entropy_rows(out.cat_scores_sa, object_cats), w.gamma));
  return loss;
}

Metrics compute_metrics(const std::vector<SampleRecord>& records) {
  Metrics m;
  m.n_total = records.size();
  std::size_t hits = 0, easy_hits = 0, hard_hits = 0, vd_hits = 0, vi_hits = 0;
  std::size_t obj_hits = 0, obj_total = 0;
  auto acc_topk = [](TopKRates& t, std::size_t rank) {
    t.count += 1;
    if (rank <= 1) t.top1 += 1.0;
    if (rank <= 3) t.top3 += 1.0;
    if (rank <= 6) t.top6 += 1.0;
  };
  for (const auto& r : records) {
    hits += r.correct;
    if (r.hard) {
      ++m.n_hard;
      hard_hits += r.correct;
    } else {
      ++m.n_easy;
      easy_hits += r.correct;
    }
    if (r.view_dependent) {
      ++m.n_vd;
      vd_hits += r.correct;
    } else {
      ++m.n_vi;
      vi_hits += r.correct;
    }
    acc_topk(r.correct ? m.category_when_correct : m.category_when_incorrect, r.category_rank);
    acc_topk(r.correct ? m.spatial_when_correct : m.spatial_when_incorrect, r.spatial_rank);
    obj_hits += r.objects_correct;
    obj_total += r.objects_total;
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.overall = ratio(hits, m.n_total);
  m.easy = ratio(easy_hits, m.n_easy);
  m.hard = ratio(hard_hits, m.n_hard);
  m.vd = ratio(vd_hits, m.n_vd);
  m.vi = ratio(vi_hits, m.n_vi);
  m.per_object_accuracy = ratio(obj_hits, obj_total);
  for (TopKRates* t : {&m.category_when_correct, &m.category_when_incorrect,
                       &m.spatial_when_correct, &m.spatial_when_incorrect}) {
    if (t->count > 0) {
      t->top1 /= static_cast<double>(t->count);
      t->top3 /= static_cast<double>(t->count);
      t->top6 /= static_cast<double>(t->count);
    }
  }
  return m;
}

std::string metrics_json(const Metrics& m) {
  json j{{"overall", m.overall},
         {"easy", m.easy},
         {"hard", m.hard},
         {"vd", m.vd},
         {"vi", m.vi},
         {"counts",
          {{"total", m.n_total},
           {"easy", m.n_easy},
           {"hard", m.n_hard},
           {"vd", m.n_vd},
           {"vi", m.n_vi}}},
         {"per_object_accuracy", m.per_object_accuracy},
         {"branch_topk",
          {{"category", {{"correct", topk_json(m.category_when_correct)},
                         {"incorrect", topk_json(m.category_when_incorrect)}}},
           {"spatial", {{"correct", topk_json(m.spatial_when_correct)},
                        {"incorrect", topk_json(m.spatial_when_incorrect)}}}}}};
  return j.dump(2);
}

std::string metrics_table_header() {
  std::ostringstream os;
  os << std::left << std::setw(16) << "Run" << std::right << std::setw(9) << "Overall"
     << std::setw(9) << "Easy" << std::setw(9) << "Hard" << std::setw(9) << "VD" << std::setw(9)
     << "VI";
  return os.str();
}

std::string metrics_table_row(const std::string& label, const Metrics& m) {
  auto pct = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << 100.0 * v << "%";
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(16) << label << std::right << std::setw(9) << pct(m.overall)
     << std::setw(9) << pct(m.easy) << std::setw(9) << pct(m.hard) << std::setw(9) << pct(m.vd)
     << std::setw(9) << pct(m.vi);
  return os.str();
}

std::string records_json(const std::vector<SampleRecord>& records, bool include_attention) {
  json arr = json::array();
  for (const auto& r : records) {
    json j{{"target", r.target},
           {"predicted", r.predicted},
           {"correct", r.correct},
           {"hard", r.hard},
           {"view_dependent", r.view_dependent},
           {"category_rank", r.category_rank},
           {"spatial_rank", r.spatial_rank},
           {"objects_correct", r.objects_correct},
           {"objects_total", r.objects_total},
           {"fused", r.fused},
           {"target_scores", r.target_scores},
           {"spatial_logits", r.spatial_logits},
           {"text_logits", r.text_logits},
           {"chosen_category_row", r.chosen_category_row}};
    if (include_attention) {
      json layers = json::array();
      for (const auto& layer : r.attention.weights) {
        json views = json::array();
        for (const auto& w : layer) views.push_back(w);
        layers.push_back(std::move(views));
      }
      j["attention"] = std::move(layers);
    }
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

EvalResult evaluate(const GroundingModel& model, const Dataset& ds, bool dump_attention) {
  EvalResult result;
  result.records.reserve(ds.samples.size());
  for (const auto& sample : ds.samples) {
    ModelOutput out = model.forward(sample, dump_attention);
    SampleRecord r;
    r.target = sample.target_index;
    r.fused = out.fused.values();
    r.predicted = argmax_index(r.fused);
    r.correct = r.predicted == r.target;
    const SampleClass cls = classify_sample(sample);
    r.hard = cls.hard;
    r.view_dependent = cls.view_dependent;
    r.target_scores = out.target_scores.values();
    r.spatial_logits = out.spatial_logits.values();
    r.text_logits = out.text_logits.values();
    r.category_rank = rank_of(r.target_scores, r.target);
    r.spatial_rank = rank_of(r.spatial_logits, r.target);
    const std::size_t n_cats = out.cat_scores_sa.dim(1);
    r.chosen_category_row.resize(n_cats);
    for (std::size_t c = 0; c < n_cats; ++c) {
      r.chosen_category_row[c] = out.cat_scores_sa.at2(r.predicted, c);
    }
    r.objects_total = sample.scene.size();
    for (std::size_t i = 0; i < sample.scene.size(); ++i) {
      std::vector<double> row(n_cats);
      for (std::size_t c = 0; c < n_cats; ++c) row[c] = out.cat_scores_sa.at2(i, c);
      r.objects_correct += argmax_index(row) == sample.scene.objects[i].category_id;
    }
    if (dump_attention) r.attention = out.diagnostics;
    result.records.push_back(std::move(r));
  }
  result.metrics = compute_metrics(result.records);
  return result;
}

void TrainConfig::validate() const {
  loss.validate();
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (lr < 0.0) throw std::invalid_argument("train: learning rate must be >= 0");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw std::invalid_argument("train: decay in (0, 1]");
  if (lr_decay_every == 0) throw std::invalid_argument("train: lr_decay_every must be >= 1");
  if (color.alpha_min > color.alpha_max || color.noise_sigma < 0.0) {
    throw std::invalid_argument("train: bad color augmentation range");
  }
}

Checkpoint training_checkpoint(GroundingModel& model, const AdamState& opt,
                               std::size_t epochs_completed) {
  Checkpoint ckpt = model.snapshot();
  ParamSet ps = model.params();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    ckpt["adam.m." + ps[k].name] = CheckpointEntry{ps[k].tensor.shape(), opt.first_moment[k]};
    ckpt["adam.v." + ps[k].name] = CheckpointEntry{ps[k].tensor.shape(), opt.second_moment[k]};
  }
  ckpt["meta.adam_step"] = CheckpointEntry{{1}, {static_cast<double>(opt.step_count)}};
  ckpt["meta.epochs_completed"] = CheckpointEntry{{1}, {static_cast<double>(epochs_completed)}};
  return ckpt;
}

std::size_t restore_training(GroundingModel& model, AdamState& opt, const Checkpoint& ckpt) {
  model.restore(ckpt);
  ParamSet ps = model.params();
  opt = AdamState::init(ps);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto m = ckpt.find("adam.m." + ps[k].name);
    const auto v = ckpt.find("adam.v." + ps[k].name);
    if (m != ckpt.end()) opt.first_moment[k] = m->second.data;
    if (v != ckpt.end()) opt.second_moment[k] = v->second.data;
  }
  if (const auto it = ckpt.find("meta.adam_step"); it != ckpt.end()) {
    opt.step_count = static_cast<std::uint64_t>(it->second.data[0]);
  }
  if (const auto it = ckpt.find("meta.epochs_completed"); it != ckpt.end()) {
    return static_cast<std::size_t>(it->second.data[0]);
  }
  return 0;
}

TrainResult train(GroundingModel& model, AdamState& opt_state, const Dataset& train_ds,
                  const Dataset* test_ds, const TrainConfig& cfg, std::size_t start_epoch) {
  cfg.validate();
  if (train_ds.samples.empty()) throw std::invalid_argument("train: dataset is empty");

  ParamSet params = model.params();
  if (opt_state.first_moment.empty()) opt_state = AdamState::init(params);

  TrainResult result;
  result.epochs_completed = start_epoch;
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    AdamConfig adam;
    adam.lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));

    Rng epoch_rng = Rng(cfg.seed).fork(epoch + 1);
    std::vector<std::size_t> order(train_ds.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), epoch_rng.engine());

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      std::vector<Tensor> losses;
      losses.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const GroundingSample& sample = train_ds.samples[order[k]];
        if (cfg.augment_colors) {
          GroundingSample augmented = sample;
          augmented.scene = augment_scene_colors(sample.scene, epoch_rng, cfg.color);
          losses.push_back(composite_loss(model.forward(augmented), augmented, cfg.loss));
        } else {
          losses.push_back(composite_loss(model.forward(sample), sample, cfg.loss));
        }
      }
      Tensor batch_loss = mean_of(losses);
      const double loss_value = batch_loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingDivergence("training diverged: loss " + std::to_string(loss_value) +
                                 " at epoch " + std::to_string(epoch));
      }
      loss_sum += loss_value;
      ++n_batches;
      zero_grads(params);
      backward(batch_loss);
      adam_step(params, opt_state, adam);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(n_batches);
    if (test_ds) {
      EvalResult ev = evaluate(model, *test_ds);
      stats.test_accuracy = ev.metrics.overall;
      result.final_metrics = ev.metrics;
    }
    result.history.push_back(stats);
    result.epochs_completed = epoch + 1;

    if (!cfg.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_checkpoint(cfg.checkpoint_dir + "/epoch_" + std::to_string(epoch + 1) + ".ckpt",
                      training_checkpoint(model, opt_state, epoch + 1));
    }
    if (cfg.verbose) {
      std::cout << "epoch " << epoch + 1 << "  loss " << stats.mean_loss;
      if (test_ds) std::cout << "  test acc " << stats.test_accuracy;
      std::cout << std::endl;
    }
    if (cfg.stop_at_accuracy > 0.0 && test_ds && stats.test_accuracy >= cfg.stop_at_accuracy) {
      break;
    }
  }
  if (!test_ds) {
    result.final_metrics = evaluate(model, train_ds).metrics;
  }
  return result;
}

}  // namespace vg3d

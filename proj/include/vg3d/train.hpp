#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vg3d/augment.hpp"
#include "vg3d/model.hpp"
#include "vg3d/optim.hpp"
#include "vg3d/scene.hpp"

namespace vg3d {

struct LossWeights {
  double alpha = 0.5;  // text categorization
  double beta = 1.0;   // object categorization
  double gamma = 0.5;  // scene-aware object categorization

  void validate() const;
};

// Reference loss plus the three weighted auxiliary cross-entropies.
Tensor composite_loss(const ModelOutput& out, const GroundingSample& sample,
                      const LossWeights& w);

// Everything evaluate() knows about one sample; enough to recompute every
// summary statistic offline.
struct SampleRecord {
  std::size_t target = 0;
  std::size_t predicted = 0;
  bool correct = false;
  bool hard = false;
  bool view_dependent = false;
  std::size_t category_rank = 0;  // 1-based rank of the true target
  std::size_t spatial_rank = 0;
  std::size_t objects_correct = 0;  // per-object category argmax hits
  std::size_t objects_total = 0;
  std::vector<double> fused;
  std::vector<double> target_scores;
  std::vector<double> spatial_logits;
  std::vector<double> text_logits;
  std::vector<double> chosen_category_row;
  FusionDiagnostics attention;  // populated only when dumping
};

struct TopKRates {
  double top1 = 0.0, top3 = 0.0, top6 = 0.0;
  std::size_t count = 0;
};

struct Metrics {
  double overall = 0.0, easy = 0.0, hard = 0.0, vd = 0.0, vi = 0.0;
  std::size_t n_total = 0, n_easy = 0, n_hard = 0, n_vd = 0, n_vi = 0;
  double per_object_accuracy = 0.0;
  TopKRates category_when_correct, category_when_incorrect;
  TopKRates spatial_when_correct, spatial_when_incorrect;
};

Metrics compute_metrics(const std::vector<SampleRecord>& records);

std::string metrics_json(const Metrics& m);
std::string metrics_table_header();
std::string metrics_table_row(const std::string& label, const Metrics& m);
std::string records_json(const std::vector<SampleRecord>& records, bool include_attention);

struct EvalResult {
  Metrics metrics;
  std::vector<SampleRecord> records;
};

EvalResult evaluate(const GroundingModel& model, const Dataset& ds,
                    bool dump_attention = false);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 12;
  double lr = 1e-3;
  double lr_decay = 0.65;
  std::size_t lr_decay_every = 10;
  std::uint64_t seed = 1;
  LossWeights loss;
  bool augment_colors = true;
  ColorAugmentConfig color;
  double stop_at_accuracy = 0.0;  // > 0: stop once test accuracy reaches it
  std::string checkpoint_dir;     // empty: keep no checkpoints
  bool verbose = false;

  void validate() const;
};

struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double test_accuracy = -1.0;  // -1 when not evaluated
};

struct TrainResult {
  std::vector<EpochStats> history;
  Metrics final_metrics;
  std::size_t epochs_completed = 0;
};

// Mini-batch Adam over the full composite loss. Per-epoch RNG streams are
// derived from (seed, epoch), so resuming from a checkpoint at an epoch
// boundary replays the identical remaining trajectory.
TrainResult train(GroundingModel& model, AdamState& opt_state, const Dataset& train_ds,
                  const Dataset* test_ds, const TrainConfig& cfg, std::size_t start_epoch = 0);

// Model parameters, optimizer moments, and progress counters in one file.
Checkpoint training_checkpoint(GroundingModel& model, const AdamState& opt,
                               std::size_t epochs_completed);
// Returns the stored epochs_completed.
std::size_t restore_training(GroundingModel& model, AdamState& opt, const Checkpoint& ckpt);

}  // namespace vg3d

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vg3d/config.hpp"
#include "vg3d/gradcheck.hpp"
#include "vg3d/train.hpp"

namespace {

using namespace vg3d;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitVerification = 3;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

ModelConfig model_config_for(const RunConfig& cfg, const Vocabulary& vocab) {
  ModelConfig mc = cfg.model;
  mc.n_categories = vocab.categories.size();
  mc.vocab_size = vocab.size();
  mc.validate();
  return mc;
}

void print_split_stats(const Dataset& ds) {
  std::size_t easy = 0, hard = 0, vd = 0, vi = 0;
  for (const auto& s : ds.samples) {
    const SampleClass c = classify_sample(s);
    (c.hard ? hard : easy) += 1;
    (c.view_dependent ? vd : vi) += 1;
  }
  std::cout << "samples: " << ds.samples.size() << "  easy: " << easy << "  hard: " << hard
            << "  vd: " << vd << "  vi: " << vi << std::endl;
}

int cmd_gen_data(std::uint64_t seed, std::size_t n_scenes, const std::string& out_path,
                 const DatasetGenConfig& gen) {
  if (n_scenes == 0) throw ConfigError("gen-data: --n-scenes must be >= 1");
  Dataset ds = generate_dataset(seed, n_scenes, gen);
  save_dataset_json(out_path, ds);
  print_split_stats(ds);
  std::cout << "wrote " << out_path << std::endl;
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume_path) {
  RunConfig cfg = RunConfig::from_file(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  std::filesystem::create_directories(cfg.out_dir);

  DataPair data = load_or_generate_data(cfg);
  ModelConfig mc = model_config_for(cfg, data.train.vocabulary);
  Rng init_rng(cfg.seed);
  GroundingModel model(mc, init_rng);

  AdamState opt = AdamState::init(model.params());
  std::size_t start_epoch = 0;
  if (!resume_path.empty()) {
    start_epoch = restore_training(model, opt, load_checkpoint(resume_path));
    std::cout << "resumed from " << resume_path << " at epoch " << start_epoch << std::endl;
  }

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.checkpoint_dir = cfg.out_dir + "/checkpoints";
  tc.verbose = true;

  if (tc.epochs == 0 || start_epoch >= tc.epochs) {
    // nothing to train; still emit the initial checkpoint
    std::filesystem::create_directories(tc.checkpoint_dir);
    save_checkpoint(tc.checkpoint_dir + "/initial.ckpt", training_checkpoint(model, opt, 0));
    std::cout << "no epochs requested; wrote initial checkpoint" << std::endl;
    return kExitOk;
  }

  TrainResult result = train(model, opt, data.train, &data.test, tc, start_epoch);
  save_checkpoint(cfg.out_dir + "/final.ckpt",
                  training_checkpoint(model, opt, result.epochs_completed));

  write_file(cfg.out_dir + "/metrics.json", metrics_json(result.final_metrics));
  std::cout << metrics_table_header() << "\n"
            << metrics_table_row("final", result.final_metrics) << std::endl;
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& config_path, const std::string& out_path, bool dump_attention) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  Dataset ds = load_dataset_json(data_path);
  ModelConfig mc = model_config_for(cfg, ds.vocabulary);
  Rng rng(cfg.seed);
  GroundingModel model(mc, rng);
  model.restore(load_checkpoint(checkpoint_path));

  EvalResult ev = evaluate(model, ds, dump_attention);
  const std::string metrics = metrics_json(ev.metrics);
  if (!out_path.empty()) {
    write_file(out_path, metrics);
    write_file(out_path + ".records.json", records_json(ev.records, dump_attention));
  }
  std::cout << metrics << "\n"
            << metrics_table_header() << "\n"
            << metrics_table_row("eval", ev.metrics) << std::endl;
  return kExitOk;
}

int cmd_ablate(const std::string& suite, const std::string& config_path) {
  RunConfig cfg = RunConfig::from_file(config_path);
  DataPair data = load_or_generate_data(cfg);

  struct Variant {
    std::string label;
    ModelConfig model;
  };
  std::vector<Variant> variants;
  ModelConfig base = model_config_for(cfg, data.train.vocabulary);
  if (suite == "aggregation") {
    for (Aggregation mode : {Aggregation::kAttention, Aggregation::kMaxPool, Aggregation::kMean}) {
      ModelConfig mc = base;
      mc.aggregation = mode;
      variants.push_back({aggregation_name(mode), mc});
    }
  } else if (suite == "rotations") {
    for (std::size_t r : {1, 2, 3, 4}) {
      ModelConfig mc = base;
      mc.n_rotations = r;
      variants.push_back({"rotations_" + std::to_string(r), mc});
    }
  } else if (suite == "layers") {
    for (std::size_t l : {1, 2, 3, 4}) {
      ModelConfig mc = base;
      mc.fusion_layers = l;
      variants.push_back({"layers_" + std::to_string(l), mc});
    }
  } else {
    throw ConfigError("ablate: unknown suite '" + suite +
                      "' (expected aggregation|rotations|layers)");
  }

  std::cout << metrics_table_header() << std::endl;
  for (const auto& variant : variants) {
    Rng rng(cfg.seed);
    GroundingModel model(variant.model, rng);
    AdamState opt;
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    TrainResult result = train(model, opt, data.train, &data.test, tc);
    std::cout << metrics_table_row(variant.label, result.final_metrics) << std::endl;
  }
  return kExitOk;
}

int cmd_gradcheck() {
  GradCheckSuite suite = default_grad_suite();
  GradCheckReport report = suite.run();
  for (const auto& r : report.results) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << "  max rel err " << r.max_rel_err
              << std::endl;
  }
  std::cout << (report.all_passed ? "all gradients verified" : "gradient check FAILED")
            << "  (worst " << report.worst_rel_err << ", tolerance " << suite.tolerance() << ")"
            << std::endl;
  return report.all_passed ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D visual grounding on synthetic scenes"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::uint64_t seed = 7;
  std::size_t n_scenes = 0;
  std::string out_path = "dataset.json";
  DatasetGenConfig gen_cfg;
  gen->add_option("--seed", seed, "generation seed");
  gen->add_option("--n-scenes", n_scenes, "number of samples")->required();
  gen->add_option("--out", out_path, "output JSON path");
  gen->add_option("--n-objects-min", gen_cfg.n_objects_min);
  gen->add_option("--n-objects-max", gen_cfg.n_objects_max);
  gen->add_option("--points-per-object", gen_cfg.scene.points_per_object);

  auto* tr = app.add_subcommand("train", "train a model from a config");
  std::string config_path, out_dir, resume_path;
  tr->add_option("--config", config_path, "run config JSON")->required();
  tr->add_option("--out", out_dir, "output directory (overrides config)");
  tr->add_option("--resume", resume_path, "checkpoint to resume from");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, data_path, eval_config, eval_out;
  bool dump_attention = false;
  ev->add_option("--checkpoint", ckpt_path)->required();
  ev->add_option("--data", data_path)->required();
  ev->add_option("--config", eval_config, "config the checkpoint was trained with");
  ev->add_option("--out", eval_out, "metrics JSON output path");
  ev->add_flag("--dump-attention", dump_attention, "include per-layer anchor weights");

  auto* ab = app.add_subcommand("ablate", "train ablation variants under one seed");
  std::string suite_name, ablate_config;
  ab->add_option("--suite", suite_name, "aggregation|rotations|layers")->required();
  ab->add_option("--config", ablate_config, "run config JSON")->required();

  app.add_subcommand("gradcheck", "finite-difference verification of every op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(seed, n_scenes, out_path, gen_cfg);
    if (tr->parsed()) return cmd_train(config_path, out_dir, resume_path);
    if (ev->parsed()) return cmd_eval(ckpt_path, data_path, eval_config, eval_out, dump_attention);
    if (ab->parsed()) return cmd_ablate(suite_name, ablate_config);
    return cmd_gradcheck();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const GenerationError& e) {
    std::cerr << "generation error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const DatasetLoadError& e) {
    std::cerr << "dataset error";
    if (e.record_index != SIZE_MAX) std::cerr << " at record " << e.record_index;
    std::cerr << ": " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}

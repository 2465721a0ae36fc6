#include "vg3d/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vg3d {

namespace {

using json = nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + std::string(key) + "': " + e.what());
    }
  }
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  RunConfig cfg;
  maybe(j, "seed", cfg.seed);
  maybe(j, "out_dir", cfg.out_dir);
  if (j.contains("data")) {
    const json& d = j.at("data");
    maybe(d, "train_path", cfg.train_path);
    maybe(d, "test_path", cfg.test_path);
    maybe(d, "n_train", cfg.n_train);
    maybe(d, "n_test", cfg.n_test);
    maybe(d, "n_objects_min", cfg.gen.n_objects_min);
    maybe(d, "n_objects_max", cfg.gen.n_objects_max);
    maybe(d, "n_categories", cfg.gen.scene.n_categories);
    maybe(d, "points_per_object", cfg.gen.scene.points_per_object);
    maybe(d, "room_extent", cfg.gen.scene.room_extent);
    maybe(d, "min_separation", cfg.gen.scene.min_separation);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    maybe(m, "d_model", cfg.model.d_model);
    maybe(m, "d_text", cfg.model.d_text);
    maybe(m, "heads", cfg.model.n_heads);
    maybe(m, "sa_layers", cfg.model.sa_layers);
    maybe(m, "text_layers", cfg.model.text_layers);
    maybe(m, "fusion_layers", cfg.model.fusion_layers);
    maybe(m, "n_rotations", cfg.model.n_rotations);
    maybe(m, "lambda", cfg.model.lambda);
    maybe(m, "mu", cfg.model.mu);
    if (m.contains("aggregation")) {
      try {
        cfg.model.aggregation = aggregation_from_name(m.at("aggregation").get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "lr", cfg.train.lr);
    maybe(t, "lr_decay", cfg.train.lr_decay);
    maybe(t, "lr_decay_every", cfg.train.lr_decay_every);
    maybe(t, "stop_at_accuracy", cfg.train.stop_at_accuracy);
    maybe(t, "augment_colors", cfg.train.augment_colors);
    maybe(t, "color_noise_sigma", cfg.train.color.noise_sigma);
    if (t.contains("color_alpha_range")) {
      const auto range = t.at("color_alpha_range").get<std::vector<double>>();
      if (range.size() != 2) throw ConfigError("config: color_alpha_range needs two values");
      cfg.train.color.alpha_min = range[0];
      cfg.train.color.alpha_max = range[1];
    }
    if (t.contains("loss")) {
      const json& l = t.at("loss");
      maybe(l, "alpha", cfg.train.loss.alpha);
      maybe(l, "beta", cfg.train.loss.beta);
      maybe(l, "gamma", cfg.train.loss.gamma);
    }
  }
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  try {
    model.validate();
    train.validate();
    if (train_path.empty() != test_path.empty()) {
      throw ConfigError("config: set both train_path and test_path, or neither");
    }
    if (train_path.empty()) {
      if (n_train == 0) throw ConfigError("config: n_train must be >= 1");
      if (gen.n_objects_min < 3) throw ConfigError("config: n_objects_min must be >= 3");
      if (gen.n_objects_max < gen.n_objects_min) {
        throw ConfigError("config: n_objects_max < n_objects_min");
      }
      if (gen.scene.points_per_object < 8) {
        throw ConfigError("config: points_per_object must be >= 8");
      }
      if (gen.scene.n_categories < 2 || gen.scene.n_categories > category_templates().size()) {
        throw ConfigError("config: n_categories outside supported range");
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

DataPair load_or_generate_data(const RunConfig& cfg) {
  DataPair data;
  if (!cfg.train_path.empty()) {
    data.train = load_dataset_json(cfg.train_path);
    data.test = load_dataset_json(cfg.test_path);
  } else {
    data.train = generate_dataset(cfg.seed, cfg.n_train, cfg.gen);
    data.test = generate_dataset(cfg.seed + 1, cfg.n_test, cfg.gen);
  }
  return data;
}

}  // namespace vg3d

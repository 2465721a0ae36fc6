#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "vg3d/model.hpp"
#include "vg3d/scene.hpp"
#include "vg3d/train.hpp"

namespace vg3d {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One JSON file describing a full run: data source or generation spec,
// model dimensions, and training hyperparameters.
struct RunConfig {
  std::uint64_t seed = 7;

  std::string train_path;  // when set, datasets come from files
  std::string test_path;
  std::size_t n_train = 2000;  // otherwise generated from (seed, spec)
  std::size_t n_test = 500;
  DatasetGenConfig gen;

  ModelConfig model;
  TrainConfig train;
  std::string out_dir = "out";

  static RunConfig from_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  void validate() const;
};

// Train/test pair according to the config: loaded from files when paths
// are set, generated from the seed otherwise.
struct DataPair {
  Dataset train;
  Dataset test;
};
DataPair load_or_generate_data(const RunConfig& cfg);

}  // namespace vg3d

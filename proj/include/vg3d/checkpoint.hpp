#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vg3d/tensor.hpp"

namespace vg3d {

// Binary checkpoint: a versioned header followed by name -> (shape,
// little-endian f64 payload) entries. Exact layout is documented in the
// README.
struct CheckpointEntry {
  Shape shape;
  std::vector<double> data;
};

using Checkpoint = std::map<std::string, CheckpointEntry>;

void save_checkpoint(const std::string& path, const Checkpoint& entries);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vg3d

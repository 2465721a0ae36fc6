#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vg3d/rng.hpp"

namespace vg3d {

struct SceneObject {
  std::size_t category_id = 0;
  std::size_t instance_id = 0;
  std::array<double, 3> centroid{};                // meters, scene frame
  std::vector<std::array<double, 6>> points;       // x,y,z relative to centroid; r,g,b in [0,1]
};

struct Scene {
  std::vector<SceneObject> objects;
  std::size_t size() const { return objects.size(); }
};

// Relation ids are stable across the vocabulary, templates and the JSON
// format. The first four depend on the viewing frame. A viewpoint is only
// meaningful relative to scene content (multi-view trained models are
// rotation invariant), so the frame is anchored at the reference object
// looking toward the room's landmark: the unique table-or-bed instance.
enum class Relation : std::size_t {
  kLeftOf = 0,
  kRightOf = 1,
  kInFrontOf = 2,
  kBehind = 3,
  kNearestTo = 4,
  kFarthestFrom = 5,
  kBetween = 6,
};
constexpr std::size_t kNumRelations = 7;

bool relation_is_view_dependent(std::size_t relation_id);
const char* relation_name(std::size_t relation_id);

// The landmark defining viewing frames: the scene's single object of the
// table or bed category. SIZE_MAX when absent or ambiguous.
std::size_t find_frame_landmark(const Scene& scene);

// Basis of the frame at `origin` facing the landmark: returns {front,
// left} unit vectors in the xy plane.
struct ViewFrame {
  std::array<double, 2> front;
  std::array<double, 2> left;
};
ViewFrame landmark_frame(const std::array<double, 3>& origin,
                         const std::array<double, 3>& landmark);

struct GroundingSample {
  Scene scene;
  std::vector<std::size_t> tokens;       // leading classification token
  std::size_t target_index = 0;
  std::size_t target_category_id = 0;
  std::vector<std::size_t> anchor_indices;
  std::size_t relation_id = 0;
  bool is_view_dependent = false;
  std::size_t distractor_count = 0;      // same-category objects excluding the target
};

struct Vocabulary {
  std::vector<std::string> categories;
  std::vector<std::string> relations;

  std::size_t cls_token() const { return 0; }
  std::size_t category_token(std::size_t cat) const { return 1 + cat; }
  std::size_t relation_token(std::size_t rel) const { return 1 + categories.size() + rel; }
  std::size_t size() const { return 1 + categories.size() + relations.size(); }
  std::string token_name(std::size_t id) const;

  static Vocabulary standard(std::size_t n_categories = 8);
};

// Appearance template for one category. Categories are separable from
// their sampled points; "box" and "crate" share a shape and differ only by
// a small color offset, and each occurs only alongside its room style's
// marker category, so scene context carries the disambiguating signal.
struct CategoryTemplate {
  const char* name;
  std::array<double, 3> extent;    // axis-aligned box the points fill
  std::array<double, 3> color;
  std::array<double, 2> z_range;   // centroid height band
};

const std::vector<CategoryTemplate>& category_templates();

struct SceneConfig {
  std::size_t n_objects = 6;
  std::size_t n_categories = 8;
  double room_extent = 5.0;              // centroids in [-extent/2, extent/2]^2
  std::size_t points_per_object = 32;
  double min_separation = 0.3;           // pairwise centroid distance
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Scene generate_scene(Rng& rng, const SceneConfig& cfg);
GroundingSample generate_utterance(const Scene& scene, Rng& rng, const Vocabulary& vocab);

struct SampleClass {
  bool hard = false;
  bool view_dependent = false;
};

// hard iff distractor_count > hard_threshold; VD from the relation id.
SampleClass classify_sample(const GroundingSample& s, std::size_t hard_threshold = 1);

struct Dataset {
  Vocabulary vocabulary;
  std::vector<GroundingSample> samples;
};

struct DatasetGenConfig {
  SceneConfig scene;
  std::size_t n_objects_min = 4;
  std::size_t n_objects_max = 8;
};

Dataset generate_dataset(std::uint64_t seed, std::size_t n_samples, const DatasetGenConfig& cfg);

struct DatasetLoadError : std::runtime_error {
  DatasetLoadError(const std::string& what, std::size_t record)
      : std::runtime_error(what), record_index(record) {}
  std::size_t record_index;  // SIZE_MAX when the failure is not sample-specific
};

void save_dataset_json(const std::string& path, const Dataset& ds);
Dataset load_dataset_json(const std::string& path);

bool samples_equal(const GroundingSample& a, const GroundingSample& b);

}  // namespace vg3d

#include "vg3d/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace vg3d {

namespace {

using json = nlohmann::ordered_json;

// Satisfier must point at least this far into the relation's half-plane
// cone (on the unit direction); everything else must sit on the other side
// of zero, so relation membership is decidable from the sign alone.
constexpr double kAxisCone = 0.65;
// Required gap between the best and second-best candidate for the
// distance-based relations, in meters.
constexpr double kDistanceMargin = 0.35;
// Minimum anchor-to-landmark distance for a stable viewing frame.
constexpr double kLandmarkMinDistance = 0.8;

constexpr std::size_t kPlacementBudget = 1000;
constexpr std::size_t kUtteranceAttempts = 300;

double planar_dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

bool relation_is_view_dependent(std::size_t relation_id) { return relation_id < 4; }

std::size_t find_frame_landmark(const Scene& scene) {
  std::size_t found = SIZE_MAX;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (scene.objects[i].category_id <= 1) {
      if (found != SIZE_MAX) return SIZE_MAX;  // ambiguous
      found = i;
    }
  }
  return found;
}

ViewFrame landmark_frame(const std::array<double, 3>& origin,
                         const std::array<double, 3>& landmark) {
  const double dx = landmark[0] - origin[0], dy = landmark[1] - origin[1];
  const double norm = std::hypot(dx, dy);
  if (norm < 1e-9) throw std::invalid_argument("landmark_frame: origin on the landmark");
  // facing the landmark, left is 90 degrees counter-clockwise
  return ViewFrame{{dx / norm, dy / norm}, {-dy / norm, dx / norm}};
}

const char* relation_name(std::size_t relation_id) {
  static const char* names[kNumRelations] = {"left-of",    "right-of",      "in-front-of",
                                             "behind",     "nearest-to",    "farthest-from",
                                             "between"};
  if (relation_id >= kNumRelations) throw std::out_of_range("relation id out of range");
  return names[relation_id];
}

std::string Vocabulary::token_name(std::size_t id) const {
  if (id == 0) return "[CLS]";
  if (id <= categories.size()) return categories[id - 1];
  if (id < size()) return relations[id - 1 - categories.size()];
  throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
}

Vocabulary Vocabulary::standard(std::size_t n_categories) {
  const auto& templates = category_templates();
  if (n_categories < 2 || n_categories > templates.size()) {
    throw std::invalid_argument("vocabulary: n_categories must be in [2, " +
                                std::to_string(templates.size()) + "]");
  }
  Vocabulary v;
  for (std::size_t c = 0; c < n_categories; ++c) v.categories.emplace_back(templates[c].name);
  for (std::size_t r = 0; r < kNumRelations; ++r) v.relations.emplace_back(relation_name(r));
  return v;
}

const std::vector<CategoryTemplate>& category_templates() {
  static const std::vector<CategoryTemplate> templates = {
      {"table", {1.2, 0.8, 0.10}, {0.45, 0.30, 0.15}, {0.70, 0.80}},
      {"bed", {1.8, 1.4, 0.40}, {0.80, 0.80, 0.85}, {0.30, 0.50}},
      {"chair", {0.5, 0.5, 0.90}, {0.20, 0.25, 0.30}, {0.45, 0.55}},
      {"lamp", {0.3, 0.3, 1.20}, {0.90, 0.85, 0.50}, {1.20, 1.60}},
      {"sofa", {1.6, 0.9, 0.80}, {0.30, 0.50, 0.40}, {0.40, 0.50}},
      {"shelf", {0.9, 0.3, 1.80}, {0.55, 0.40, 0.25}, {0.90, 1.10}},
      {"box", {0.6, 0.6, 0.60}, {0.55, 0.35, 0.20}, {0.30, 0.40}},
      {"crate", {0.6, 0.6, 0.60}, {0.61, 0.35, 0.20}, {0.30, 0.40}},
  };
  return templates;
}

Scene generate_scene(Rng& rng, const SceneConfig& cfg) {
  const auto& templates = category_templates();
  if (cfg.n_objects < 3) {
    throw GenerationError("generate_scene: need at least 3 objects, got " +
                          std::to_string(cfg.n_objects));
  }
  if (cfg.n_categories < 2 || cfg.n_categories > templates.size()) {
    throw GenerationError("generate_scene: n_categories outside [2, " +
                          std::to_string(templates.size()) + "]");
  }
  if (cfg.points_per_object < 8) {
    throw GenerationError("generate_scene: points_per_object must be >= 8");
  }

  // Room styles only exist for the full category set: each style places
  // exactly one landmark (table or bed), and one of the two look-alike
  // categories occurs exclusively per style. The unique landmark anchors
  // the viewing frames; the style/look-alike pairing makes scene context
  // informative for categorization.
  std::vector<std::size_t> allowed;
  std::size_t marker = 0;
  const bool styled = cfg.n_categories == 8;
  if (styled) {
    const std::size_t style = rng.index(2);
    marker = style == 0 ? 0 : 1;  // table / bed
    allowed = style == 0 ? std::vector<std::size_t>{2, 3, 4, 5, 6}
                         : std::vector<std::size_t>{2, 3, 4, 5, 7};
  } else {
    for (std::size_t c = 0; c < cfg.n_categories; ++c) allowed.push_back(c);
    marker = allowed[rng.index(allowed.size())];
  }

  Scene scene;
  const double half = cfg.room_extent / 2.0;
  std::size_t rejections = 0;
  for (std::size_t i = 0; i < cfg.n_objects; ++i) {
    SceneObject obj;
    obj.category_id = i == 0 ? marker : allowed[rng.index(allowed.size())];
    obj.instance_id = i;
    const auto& tpl = templates[obj.category_id];
    while (true) {
      obj.centroid = {rng.uniform(-half, half), rng.uniform(-half, half),
                      rng.uniform(tpl.z_range[0], tpl.z_range[1])};
      bool ok = true;
      for (const auto& other : scene.objects) {
        if (dist3(obj.centroid, other.centroid) < cfg.min_separation) {
          ok = false;
          break;
        }
      }
      if (ok) break;
      if (++rejections > kPlacementBudget) {
        throw GenerationError("generate_scene: placement failed after " +
                              std::to_string(kPlacementBudget) + " rejections");
      }
    }
    obj.points.reserve(cfg.points_per_object);
    for (std::size_t k = 0; k < cfg.points_per_object; ++k) {
      std::array<double, 6> p{};
      for (int a = 0; a < 3; ++a) {
        p[a] = rng.uniform(-tpl.extent[a] / 2.0, tpl.extent[a] / 2.0) + rng.normal(0.0, 0.01);
      }
      for (int c = 0; c < 3; ++c) {
        p[3 + c] = std::clamp(tpl.color[c] + rng.normal(0.0, 0.01), 0.0, 1.0);
      }
      obj.points.push_back(p);
    }
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

namespace {

// Direction the satisfier must take from the anchor, in the anchor's
// landmark-facing frame.
std::array<double, 2> relation_direction(Relation r, const ViewFrame& frame) {
  switch (r) {
    case Relation::kLeftOf:
      return frame.left;
    case Relation::kRightOf:
      return {-frame.left[0], -frame.left[1]};
    case Relation::kInFrontOf:
      return frame.front;
    case Relation::kBehind:
      return {-frame.front[0], -frame.front[1]};
    default:
      throw std::logic_error("relation_direction: not a frame relation");
  }
}

// Unique candidate clearly inside the relation cone, with every other
// candidate on the opposite side of the boundary; SIZE_MAX when no such
// assignment exists.
std::size_t pick_axis_target(const Scene& scene, const std::vector<std::size_t>& candidates,
                             std::size_t anchor, Relation rel, const ViewFrame& frame) {
  const std::array<double, 2> dir = relation_direction(rel, frame);
  std::size_t satisfier = SIZE_MAX;
  for (std::size_t c : candidates) {
    const double dx = scene.objects[c].centroid[0] - scene.objects[anchor].centroid[0];
    const double dy = scene.objects[c].centroid[1] - scene.objects[anchor].centroid[1];
    const double norm = std::sqrt(dx * dx + dy * dy);
    if (norm < 1e-9) return SIZE_MAX;
    const double u = (dx * dir[0] + dy * dir[1]) / norm;
    if (u >= kAxisCone) {
      if (satisfier != SIZE_MAX) return SIZE_MAX;
      satisfier = c;
    } else if (u > 0.0) {
      return SIZE_MAX;  // inside the half-plane but not clearly; ambiguous
    }
  }
  return satisfier;
}

// argmin/argmax of `score` over candidates with a margin to second place.
std::size_t pick_extreme(const std::vector<std::size_t>& candidates,
                         const std::vector<double>& score, bool want_min, double margin) {
  std::size_t best = SIZE_MAX;
  double best_v = want_min ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
  double second_v = best_v;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double v = score[k];
    const bool better = want_min ? v < best_v : v > best_v;
    if (better) {
      second_v = best_v;
      best_v = v;
      best = candidates[k];
    } else if (want_min ? v < second_v : v > second_v) {
      second_v = v;
    }
  }
  if (best == SIZE_MAX || !std::isfinite(second_v)) return SIZE_MAX;
  if (std::fabs(second_v - best_v) < margin) return SIZE_MAX;
  return best;
}

}  // namespace

GroundingSample generate_utterance(const Scene& scene, Rng& rng, const Vocabulary& vocab) {
  const std::size_t n = scene.size();
  if (n < 3) throw GenerationError("generate_utterance: scene too small");

  std::vector<std::vector<std::size_t>> by_cat(vocab.categories.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (scene.objects[i].category_id >= by_cat.size()) {
      throw GenerationError("generate_utterance: category id outside vocabulary");
    }
    by_cat[scene.objects[i].category_id].push_back(i);
  }
  std::vector<std::size_t> dup_cats;      // >= 2 instances: eligible targets
  std::vector<std::size_t> single_cats;   // exactly 1 instance: unambiguous anchors
  std::vector<std::size_t> pair_cats;     // exactly 2 instances: "between the two X"
  for (std::size_t c = 0; c < by_cat.size(); ++c) {
    if (by_cat[c].size() >= 2) dup_cats.push_back(c);
    if (by_cat[c].size() == 1) single_cats.push_back(c);
    if (by_cat[c].size() == 2) pair_cats.push_back(c);
  }
  if (dup_cats.empty()) {
    throw GenerationError("generate_utterance: no category has a distractor");
  }

  // Frame relations are rejected more often by the margin checks, so they
  // get extra draws to keep the view-dependent share up.
  static constexpr std::size_t kRelationDraw[] = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 5, 6};
  const std::size_t landmark = find_frame_landmark(scene);

  for (std::size_t attempt = 0; attempt < kUtteranceAttempts; ++attempt) {
    const auto rel = static_cast<Relation>(kRelationDraw[rng.index(std::size(kRelationDraw))]);
    const std::size_t target_cat = dup_cats[rng.index(dup_cats.size())];
    const auto& candidates = by_cat[target_cat];

    std::vector<std::size_t> anchors;
    std::size_t target = SIZE_MAX;

    if (rel == Relation::kBetween) {
      // Either the two instances of a doubled category or two distinct
      // singleton categories; both read unambiguously from the tokens.
      std::vector<std::size_t> pair_opts;
      for (std::size_t c : pair_cats) {
        if (c != target_cat) pair_opts.push_back(c);
      }
      std::vector<std::size_t> single_opts;
      for (std::size_t c : single_cats) {
        if (c != target_cat) single_opts.push_back(c);
      }
      const bool can_pair = !pair_opts.empty();
      const bool can_two_singles = single_opts.size() >= 2;
      if (!can_pair && !can_two_singles) continue;
      const bool use_pair = can_pair && (!can_two_singles || rng.index(2) == 0);
      if (use_pair) {
        const std::size_t c = pair_opts[rng.index(pair_opts.size())];
        anchors = {by_cat[c][0], by_cat[c][1]};
      } else {
        const std::size_t i1 = rng.index(single_opts.size());
        std::size_t i2 = rng.index(single_opts.size() - 1);
        if (i2 >= i1) ++i2;
        anchors = {by_cat[single_opts[i1]][0], by_cat[single_opts[i2]][0]};
      }
      std::vector<double> score;
      for (std::size_t c : candidates) {
        score.push_back(planar_dist(scene.objects[c].centroid, scene.objects[anchors[0]].centroid) +
                        planar_dist(scene.objects[c].centroid, scene.objects[anchors[1]].centroid));
      }
      target = pick_extreme(candidates, score, /*want_min=*/true, kDistanceMargin);
    } else {
      std::vector<std::size_t> anchor_opts;
      for (std::size_t c : single_cats) {
        if (c != target_cat) anchor_opts.push_back(c);
      }
      if (anchor_opts.empty()) continue;
      std::shuffle(anchor_opts.begin(), anchor_opts.end(), rng.engine());
      for (std::size_t anchor_cat : anchor_opts) {
        const std::size_t anchor = by_cat[anchor_cat][0];
        if (rel == Relation::kNearestTo || rel == Relation::kFarthestFrom) {
          std::vector<double> score;
          for (std::size_t c : candidates) {
            score.push_back(
                planar_dist(scene.objects[c].centroid, scene.objects[anchor].centroid));
          }
          target = pick_extreme(candidates, score, rel == Relation::kNearestTo, kDistanceMargin);
        } else {
          // frame relations need a usable landmark and an anchor far enough
          // from it for a stable viewing direction
          if (landmark == SIZE_MAX || anchor == landmark) continue;
          if (planar_dist(scene.objects[anchor].centroid, scene.objects[landmark].centroid) <
              kLandmarkMinDistance) {
            continue;
          }
          const ViewFrame frame =
              landmark_frame(scene.objects[anchor].centroid, scene.objects[landmark].centroid);
          target = pick_axis_target(scene, candidates, anchor, rel, frame);
        }
        if (target != SIZE_MAX) {
          anchors = {anchor};
          break;
        }
      }
    }
    if (target == SIZE_MAX) continue;

    GroundingSample s;
    s.scene = scene;
    s.target_index = target;
    s.target_category_id = target_cat;
    s.anchor_indices = anchors;
    s.relation_id = static_cast<std::size_t>(rel);
    s.is_view_dependent = relation_is_view_dependent(s.relation_id);
    s.distractor_count = candidates.size() - 1;
    s.tokens.push_back(vocab.cls_token());
    s.tokens.push_back(vocab.category_token(target_cat));
    s.tokens.push_back(vocab.relation_token(s.relation_id));
    for (std::size_t a : anchors) {
      s.tokens.push_back(vocab.category_token(scene.objects[a].category_id));
    }
    if (s.is_view_dependent) {
      // frame relations name the landmark the viewer faces, like
      // "facing the table, the chair left of the lamp"
      s.tokens.push_back(vocab.category_token(scene.objects[landmark].category_id));
    }
    return s;
  }
  throw GenerationError("generate_utterance: no valid (category, relation, anchor) triple");
}

SampleClass classify_sample(const GroundingSample& s, std::size_t hard_threshold) {
  SampleClass c;
  c.hard = s.distractor_count > hard_threshold;
  c.view_dependent = relation_is_view_dependent(s.relation_id);
  return c;
}

Dataset generate_dataset(std::uint64_t seed, std::size_t n_samples, const DatasetGenConfig& cfg) {
  if (cfg.n_objects_min < 3 || cfg.n_objects_max < cfg.n_objects_min) {
    throw GenerationError("generate_dataset: bad object count range");
  }
  Dataset ds;
  ds.vocabulary = Vocabulary::standard(cfg.scene.n_categories);
  Rng rng(seed);
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (std::size_t tries = 0;; ++tries) {
      if (tries > 200) throw GenerationError("generate_dataset: cannot produce sample");
      SceneConfig sc = cfg.scene;
      sc.n_objects = cfg.n_objects_min + rng.index(cfg.n_objects_max - cfg.n_objects_min + 1);
      try {
        Scene scene = generate_scene(rng, sc);
        ds.samples.push_back(generate_utterance(scene, rng, ds.vocabulary));
        break;
      } catch (const GenerationError&) {
        continue;
      }
    }
  }
  return ds;
}

// ---- JSON I/O ----

namespace {

json scene_to_json(const Scene& scene) {
  json objs = json::array();
  for (const auto& o : scene.objects) {
    json pts = json::array();
    for (const auto& p : o.points) pts.push_back(std::vector<double>(p.begin(), p.end()));
    objs.push_back({{"category_id", o.category_id},
                    {"instance_id", o.instance_id},
                    {"centroid", std::vector<double>(o.centroid.begin(), o.centroid.end())},
                    {"points", std::move(pts)}});
  }
  return json{{"objects", std::move(objs)}};
}

template <typename T>
T require_field(const json& j, const char* field, std::size_t record) {
  if (!j.contains(field)) {
    throw DatasetLoadError("missing field '" + std::string(field) + "'", record);
  }
  try {
    return j.at(field).get<T>();
  } catch (const json::exception& e) {
    throw DatasetLoadError("field '" + std::string(field) + "': " + e.what(), record);
  }
}

Scene scene_from_json(const json& j, std::size_t record) {
  Scene scene;
  const auto objs = require_field<json>(j, "objects", record);
  for (const auto& jo : objs) {
    SceneObject o;
    o.category_id = require_field<std::size_t>(jo, "category_id", record);
    o.instance_id = require_field<std::size_t>(jo, "instance_id", record);
    const auto cen = require_field<std::vector<double>>(jo, "centroid", record);
    if (cen.size() != 3) throw DatasetLoadError("centroid must have 3 components", record);
    std::copy(cen.begin(), cen.end(), o.centroid.begin());
    for (double c : o.centroid) {
      if (!std::isfinite(c)) throw DatasetLoadError("centroid not finite", record);
    }
    const auto pts = require_field<json>(jo, "points", record);
    for (const auto& jp : pts) {
      const auto v = jp.get<std::vector<double>>();
      if (v.size() != 6) throw DatasetLoadError("point must have 6 components", record);
      std::array<double, 6> p;
      std::copy(v.begin(), v.end(), p.begin());
      for (int c = 3; c < 6; ++c) {
        if (p[c] < 0.0 || p[c] > 1.0) throw DatasetLoadError("color outside [0,1]", record);
      }
      o.points.push_back(p);
    }
    if (o.points.size() < 8) throw DatasetLoadError("object has fewer than 8 points", record);
    scene.objects.push_back(std::move(o));
  }
  if (scene.size() < 2) throw DatasetLoadError("scene needs at least 2 objects", record);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (std::size_t k = i + 1; k < scene.size(); ++k) {
      if (scene.objects[i].instance_id == scene.objects[k].instance_id) {
        throw DatasetLoadError("duplicate instance_id", record);
      }
    }
  }
  return scene;
}

}  // namespace

void save_dataset_json(const std::string& path, const Dataset& ds) {
  json root;
  root["vocabulary"] = {{"categories", ds.vocabulary.categories},
                        {"relations", ds.vocabulary.relations}};
  json samples = json::array();
  for (const auto& s : ds.samples) {
    samples.push_back({{"scene", scene_to_json(s.scene)},
                       {"tokens", s.tokens},
                       {"target_index", s.target_index},
                       {"target_category_id", s.target_category_id},
                       {"anchor_indices", s.anchor_indices},
                       {"relation_id", s.relation_id},
                       {"is_view_dependent", s.is_view_dependent},
                       {"distractor_count", s.distractor_count}});
  }
  root["samples"] = std::move(samples);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_dataset_json: cannot open " + path);
  out << root.dump(1, '\t') << "\n";
}

Dataset load_dataset_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetLoadError("cannot open " + path, SIZE_MAX);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw DatasetLoadError(std::string("malformed JSON: ") + e.what(), SIZE_MAX);
  }
  Dataset ds;
  const auto vocab = require_field<json>(root, "vocabulary", SIZE_MAX);
  ds.vocabulary.categories = require_field<std::vector<std::string>>(vocab, "categories", SIZE_MAX);
  ds.vocabulary.relations = require_field<std::vector<std::string>>(vocab, "relations", SIZE_MAX);
  const auto samples = require_field<json>(root, "samples", SIZE_MAX);
  std::size_t record = 0;
  for (const auto& js : samples) {
    GroundingSample s;
    s.scene = scene_from_json(require_field<json>(js, "scene", record), record);
    s.tokens = require_field<std::vector<std::size_t>>(js, "tokens", record);
    s.target_index = require_field<std::size_t>(js, "target_index", record);
    s.target_category_id = require_field<std::size_t>(js, "target_category_id", record);
    s.anchor_indices = require_field<std::vector<std::size_t>>(js, "anchor_indices", record);
    s.relation_id = require_field<std::size_t>(js, "relation_id", record);
    s.is_view_dependent = require_field<bool>(js, "is_view_dependent", record);
    s.distractor_count = require_field<std::size_t>(js, "distractor_count", record);

    if (s.target_index >= s.scene.size()) {
      throw DatasetLoadError("target_index out of range", record);
    }
    if (s.distractor_count < 1) {
      throw DatasetLoadError("distractor_count must be >= 1", record);
    }
    if (s.relation_id >= ds.vocabulary.relations.size()) {
      throw DatasetLoadError("relation_id out of range", record);
    }
    if (s.tokens.size() < 2) throw DatasetLoadError("token sequence too short", record);
    for (std::size_t t : s.tokens) {
      if (t >= ds.vocabulary.size()) throw DatasetLoadError("token id out of range", record);
    }
    for (std::size_t a : s.anchor_indices) {
      if (a >= s.scene.size()) throw DatasetLoadError("anchor index out of range", record);
      if (a == s.target_index) throw DatasetLoadError("anchor equals target", record);
    }
    ds.samples.push_back(std::move(s));
    ++record;
  }
  return ds;
}

bool samples_equal(const GroundingSample& a, const GroundingSample& b) {
  if (a.tokens != b.tokens || a.target_index != b.target_index ||
      a.target_category_id != b.target_category_id || a.anchor_indices != b.anchor_indices ||
      a.relation_id != b.relation_id || a.is_view_dependent != b.is_view_dependent ||
      a.distractor_count != b.distractor_count || a.scene.size() != b.scene.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.scene.size(); ++i) {
    const auto& oa = a.scene.objects[i];
    const auto& ob = b.scene.objects[i];
    if (oa.category_id != ob.category_id || oa.instance_id != ob.instance_id ||
        oa.centroid != ob.centroid || oa.points != ob.points) {
      return false;
    }
  }
  return true;
}

}  // namespace vg3d

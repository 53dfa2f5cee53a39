#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spg/errors.hpp"
#include "spg/generation.hpp"
#include "spg/losses.hpp"
#include "spg/network.hpp"
#include "spg/supervision.hpp"
#include "spg/synth.hpp"
#include "spg/voxelgrid.hpp"

namespace spg {

struct OptimizerConfig {
  bool momentum = true;  // false: plain SGD
  double learning_rate = 0.02;
  double momentum_coef = 0.9;
  double grad_clip = 5.0;  // global L2 norm; 0 disables
  std::size_t steps = 500;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
};

/// Everything one run needs. Defaults carry the published constants:
/// 25% hiding, alpha 0.5, beta 2.0, threshold 0.5, 6-step area, 8000 points.
struct RunConfig {
  GridSpec grid = desk_grid();
  int area_radius = 6;
  AreaMode area_mode = AreaMode::kVoxel3d;
  bool hide_enabled = true;
  double gamma_percent = 25.0;
  bool expansion_enabled = true;
  LossWeights loss;
  NetworkConfig network;
  GenerationConfig generation;
  SceneRecipe recipe;
  DegradationProfile rainy = DegradationProfile::rainy();
  OptimizerConfig optimizer;

  /// Desk-scale grid covering the synthetic scene extent.
  static GridSpec desk_grid() { return GridSpec{{0.0, -12.8, -2.0}, {0.8, 0.8, 0.8}, {32, 32, 5}}; }

  /// Voxel size used with PointPillars on the Waymo domain adaptation data.
  static Vec3 pointpillars_voxel_size() { return {0.32, 0.32, 0.4}; }

  TargetOptions target_options(std::uint64_t hide_seed) const {
    return TargetOptions{area_radius, area_mode, expansion_enabled,
                         HideConfig{hide_enabled ? gamma_percent : 0.0, hide_seed}};
  }

  /// Radius of the area in which the model generates points.
  int generation_radius() const { return expansion_enabled ? area_radius : 0; }

  /// Applies "no-expansion", "no-hide", "no-confidence" switches.
  void apply_ablations(const std::vector<std::string>& flags) {
    for (const auto& f : flags) {
      if (f == "no-expansion") expansion_enabled = false;
      else if (f == "no-hide") hide_enabled = false;
      else if (f == "no-confidence") generation.confidence_channel = false;
      else if (!f.empty()) throw UsageError("unknown ablation '" + f + "'");
    }
  }

  void validate() const {
    grid.validate();
    if (area_radius < 0) throw UsageError("area.radius must be non-negative");
    if (gamma_percent < 0 || gamma_percent > 100) throw UsageError("hide.gamma_percent must lie in [0, 100]");
    if (loss.alpha < 0 || loss.beta < 0 || loss.focal_gamma < 0) throw UsageError("loss weights must be non-negative");
    if (!(loss.focal_balance > 0 && loss.focal_balance < 1)) throw UsageError("loss.focal_balance must lie in (0, 1)");
    network.validate();
    generation.validate();
    recipe.validate();
    if (optimizer.learning_rate < 0) throw UsageError("optimizer.learning_rate must be non-negative");
    if (optimizer.batch_size == 0) throw UsageError("optimizer.batch_size must be positive");
  }
};

namespace config_detail {

using nlohmann::json;

// Reads keys of one section, rejecting unknown ones.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw UsageError("config section '" + name_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw UsageError("unknown config key '" + name_ + "." + k + "'");
    }
  }

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      const auto& v = j_.at(key);
      if constexpr (std::is_same_v<V, bool>) {
        if (!v.is_boolean()) throw UsageError("");
      } else if constexpr (std::is_arithmetic_v<V>) {
        if (!v.is_number()) throw UsageError("");
        if constexpr (std::is_integral_v<V>) {
          if (!v.is_number_integer()) throw UsageError("");
          if constexpr (std::is_unsigned_v<V>) {
            if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw UsageError("");
          }
        }
      } else if constexpr (std::is_same_v<V, std::string>) {
        if (!v.is_string()) throw UsageError("");
      }
      out = v.get<V>();
    } catch (const std::exception&) {
      throw UsageError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void vec3(const char* key, Vec3& out) {
    std::vector<double> v{out.x, out.y, out.z};
    get(key, v);
    if (v.size() != 3) throw UsageError("config key '" + name_ + "." + key + "' needs three numbers");
    out = {v[0], v[1], v[2]};
  }

  void range(const char* key, Range& out) {
    std::vector<double> v{out.lo, out.hi};
    get(key, v);
    if (v.size() != 2) throw UsageError("config key '" + name_ + "." + key + "' needs [lo, hi]");
    out = {v[0], v[1]};
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) const { return j_.at(key); }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  using config_detail::Section;
  RunConfig c;
  Section root(j, "root");
  if (root.has("grid")) {
    Section s(root.at("grid"), "grid");
    s.vec3("origin", c.grid.origin);
    s.vec3("voxel_size", c.grid.voxel_size);
    std::vector<std::int64_t> dims(c.grid.dims.begin(), c.grid.dims.end());
    s.get("dims", dims);
    if (dims.size() != 3) throw UsageError("grid.dims needs three integers");
    c.grid.dims = {dims[0], dims[1], dims[2]};
  }
  if (root.has("area")) {
    Section s(root.at("area"), "area");
    s.get("radius", c.area_radius);
    std::string mode = c.area_mode == AreaMode::kVoxel3d ? "3d" : "2d";
    s.get("mode", mode);
    if (mode != "3d" && mode != "2d") throw UsageError("area.mode must be \"3d\" or \"2d\"");
    c.area_mode = mode == "3d" ? AreaMode::kVoxel3d : AreaMode::kBev2d;
  }
  if (root.has("hide")) {
    Section s(root.at("hide"), "hide");
    s.get("enabled", c.hide_enabled);
    s.get("gamma_percent", c.gamma_percent);
  }
  if (root.has("expansion")) {
    Section s(root.at("expansion"), "expansion");
    s.get("enabled", c.expansion_enabled);
  }
  if (root.has("loss")) {
    Section s(root.at("loss"), "loss");
    s.get("alpha", c.loss.alpha);
    s.get("beta", c.loss.beta);
    s.get("focal_gamma", c.loss.focal_gamma);
    s.get("focal_balance", c.loss.focal_balance);
    s.get("normalized_xyz", c.loss.normalized_xyz);
  }
  if (root.has("network")) {
    Section s(root.at("network"), "network");
    s.get("channel_width", c.network.channel_width);
    s.get("level1_convs", c.network.level1_convs);
    s.get("level2_convs", c.network.level2_convs);
    s.get("kernel", c.network.kernel);
    s.get("points_per_voxel_cap", c.network.points_per_voxel_cap);
    std::string skip = c.network.skip == SkipMode::kConcat ? "concat" : "add";
    s.get("skip", skip);
    if (skip != "concat" && skip != "add") throw UsageError("network.skip must be \"concat\" or \"add\"");
    c.network.skip = skip == "concat" ? SkipMode::kConcat : SkipMode::kAdd;
    std::string init = c.network.init == InitMode::kRandom ? "random" : "zero";
    s.get("init", init);
    if (init != "random" && init != "zero") throw UsageError("network.init must be \"random\" or \"zero\"");
    c.network.init = init == "random" ? InitMode::kRandom : InitMode::kZero;
  }
  if (root.has("generation")) {
    Section s(root.at("generation"), "generation");
    s.get("p_thresh", c.generation.p_thresh);
    s.get("k_max", c.generation.k_max);
    s.get("confidence_channel", c.generation.confidence_channel);
    if (s.has("profile")) {
      std::string p;
      s.get("profile", p);
      if (p == "waymo") c.generation.k_max = kMaxSemanticPointsWaymo;
      else if (p == "kitti") c.generation.k_max = kMaxSemanticPointsKitti;
      else throw UsageError("generation.profile must be \"waymo\" or \"kitti\"");
    }
  }
  if (root.has("synth")) {
    Section s(root.at("synth"), "synth");
    auto& r = c.recipe;
    s.get("min_objects", r.min_objects);
    s.get("max_objects", r.max_objects);
    s.get("pedestrian_fraction", r.pedestrian_fraction);
    s.range("vehicle_length", r.vehicle_length);
    s.range("vehicle_width", r.vehicle_width);
    s.range("vehicle_height", r.vehicle_height);
    s.range("pedestrian_length", r.pedestrian_length);
    s.range("pedestrian_width", r.pedestrian_width);
    s.range("pedestrian_height", r.pedestrian_height);
    s.get("surface_density", r.surface_density);
    s.get("reference_range", r.reference_range);
    s.get("ground_density", r.ground_density);
    s.get("clutter_poles", r.clutter_poles);
    s.get("points_per_pole", r.points_per_pole);
    s.range("extent_x", r.extent_x);
    s.range("extent_y", r.extent_y);
    s.get("ground_z", r.ground_z);
    s.get("object_gap", r.object_gap);
    s.get("max_retries", r.max_retries);
    s.get("intensity", r.intensity);
    s.get("seed", r.seed);
  }
  if (root.has("rainy")) {
    Section s(root.at("rainy"), "rainy");
    std::string mode = "patchy";
    s.get("mode", mode);
    if (mode == "none") c.rainy.mode = DegradationMode::kNone;
    else if (mode == "uniform") c.rainy.mode = DegradationMode::kUniform;
    else if (mode == "patchy") c.rainy.mode = DegradationMode::kPatchy;
    else throw UsageError("rainy.mode must be none, uniform or patchy");
    s.get("rate", c.rainy.rate);
    s.get("patch_count", c.rainy.patch_count);
    s.get("patch_radius", c.rainy.patch_radius);
    s.get("keep_prob", c.rainy.keep_prob);
    s.get("seed", c.rainy.seed);
  }
  if (root.has("optimizer")) {
    Section s(root.at("optimizer"), "optimizer");
    std::string kind = c.optimizer.momentum ? "momentum" : "sgd";
    s.get("kind", kind);
    if (kind != "sgd" && kind != "momentum") throw UsageError("optimizer.kind must be \"sgd\" or \"momentum\"");
    c.optimizer.momentum = kind == "momentum";
    s.get("learning_rate", c.optimizer.learning_rate);
    s.get("momentum", c.optimizer.momentum_coef);
    s.get("grad_clip", c.optimizer.grad_clip);
    s.get("steps", c.optimizer.steps);
    s.get("batch_size", c.optimizer.batch_size);
    s.get("seed", c.optimizer.seed);
  }
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  using nlohmann::json;
  auto v3 = [](const Vec3& v) { return json::array({v.x, v.y, v.z}); };
  auto rg = [](const Range& r) { return json::array({r.lo, r.hi}); };
  const auto& r = c.recipe;
  const char* rainy_mode = c.rainy.mode == DegradationMode::kNone      ? "none"
                           : c.rainy.mode == DegradationMode::kUniform ? "uniform"
                                                                       : "patchy";
  return {
      {"grid", {{"origin", v3(c.grid.origin)}, {"voxel_size", v3(c.grid.voxel_size)}, {"dims", c.grid.dims}}},
      {"area", {{"radius", c.area_radius}, {"mode", c.area_mode == AreaMode::kVoxel3d ? "3d" : "2d"}}},
      {"hide", {{"enabled", c.hide_enabled}, {"gamma_percent", c.gamma_percent}}},
      {"expansion", {{"enabled", c.expansion_enabled}}},
      {"loss",
       {{"alpha", c.loss.alpha},
        {"beta", c.loss.beta},
        {"focal_gamma", c.loss.focal_gamma},
        {"focal_balance", c.loss.focal_balance},
        {"normalized_xyz", c.loss.normalized_xyz}}},
      {"network",
       {{"channel_width", c.network.channel_width},
        {"level1_convs", c.network.level1_convs},
        {"level2_convs", c.network.level2_convs},
        {"kernel", c.network.kernel},
        {"points_per_voxel_cap", c.network.points_per_voxel_cap},
        {"skip", c.network.skip == SkipMode::kConcat ? "concat" : "add"},
        {"init", c.network.init == InitMode::kRandom ? "random" : "zero"}}},
      {"generation",
       {{"p_thresh", c.generation.p_thresh},
        {"k_max", c.generation.k_max},
        {"confidence_channel", c.generation.confidence_channel}}},
      {"synth",
       {{"min_objects", r.min_objects},
        {"max_objects", r.max_objects},
        {"pedestrian_fraction", r.pedestrian_fraction},
        {"vehicle_length", rg(r.vehicle_length)},
        {"vehicle_width", rg(r.vehicle_width)},
        {"vehicle_height", rg(r.vehicle_height)},
        {"pedestrian_length", rg(r.pedestrian_length)},
        {"pedestrian_width", rg(r.pedestrian_width)},
        {"pedestrian_height", rg(r.pedestrian_height)},
        {"surface_density", r.surface_density},
        {"reference_range", r.reference_range},
        {"ground_density", r.ground_density},
        {"clutter_poles", r.clutter_poles},
        {"points_per_pole", r.points_per_pole},
        {"extent_x", rg(r.extent_x)},
        {"extent_y", rg(r.extent_y)},
        {"ground_z", r.ground_z},
        {"object_gap", r.object_gap},
        {"max_retries", r.max_retries},
        {"intensity", r.intensity},
        {"seed", r.seed}}},
      {"rainy",
       {{"mode", rainy_mode},
        {"rate", c.rainy.rate},
        {"patch_count", c.rainy.patch_count},
        {"patch_radius", c.rainy.patch_radius},
        {"keep_prob", c.rainy.keep_prob},
        {"seed", c.rainy.seed}}},
      {"optimizer",
       {{"kind", c.optimizer.momentum ? "momentum" : "sgd"},
        {"learning_rate", c.optimizer.learning_rate},
        {"momentum", c.optimizer.momentum_coef},
        {"grad_clip", c.optimizer.grad_clip},
        {"steps", c.optimizer.steps},
        {"batch_size", c.optimizer.batch_size},
        {"seed", c.optimizer.seed}}},
  };
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace spg

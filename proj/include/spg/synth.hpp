#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spg/errors.hpp"
#include "spg/generation.hpp"
#include "spg/geometry.hpp"
#include "spg/rng.hpp"

// Synthetic LiDAR-like frames. A virtual sensor sits at the origin; objects
// are boxes on a ground plane whose sensor-facing faces and roof are sampled
// with range-dependent density, so the far side and interior of every object
// stay empty as in real scans.

namespace spg {

struct Range {
  double lo = 0, hi = 0;
  double sample(Rng& rng) const { return rng.uniform(lo, hi); }
  bool valid() const { return std::isfinite(lo) && std::isfinite(hi) && lo <= hi; }
};

struct SceneRecipe {
  int min_objects = 2;
  int max_objects = 5;
  double pedestrian_fraction = 0.0;
  Range vehicle_length{3.6, 4.8}, vehicle_width{1.6, 2.0}, vehicle_height{1.4, 1.8};
  Range pedestrian_length{0.5, 0.9}, pedestrian_width{0.5, 0.9}, pedestrian_height{1.5, 1.9};
  double surface_density = 40.0;     // points per m^2 at reference_range
  double reference_range = 10.0;     // density falls off as (reference_range / r)^2 beyond this
  double ground_density = 1.5;       // ground points per m^2 at reference_range
  int clutter_poles = 4;             // vertical background structures
  int points_per_pole = 30;
  Range extent_x{2.0, 24.0}, extent_y{-11.0, 11.0};
  double ground_z = -1.6;
  double object_gap = 0.5;           // min BEV clearance between circumscribed circles
  int max_retries = 200;
  bool intensity = true;             // one property channel
  std::uint64_t seed = 0;

  void validate() const {
    if (min_objects < 0 || max_objects < min_objects) throw UsageError("recipe: invalid object count range");
    for (const Range* r : {&vehicle_length, &vehicle_width, &vehicle_height, &pedestrian_length, &pedestrian_width,
                           &pedestrian_height}) {
      if (!r->valid() || r->lo <= 0) throw UsageError("recipe: object sizes must be positive ranges");
    }
    if (!extent_x.valid() || !extent_y.valid() || extent_x.lo >= extent_x.hi || extent_y.lo >= extent_y.hi) {
      throw UsageError("recipe: extent must be non-degenerate");
    }
    if (surface_density <= 0 || ground_density < 0 || reference_range <= 0) throw UsageError("recipe: bad densities");
    if (pedestrian_fraction < 0 || pedestrian_fraction > 1) throw UsageError("recipe: pedestrian_fraction in [0,1]");
  }
};

enum class DegradationMode { kNone, kUniform, kPatchy };

struct DegradationProfile {
  DegradationMode mode = DegradationMode::kNone;
  double rate = 0.17;       // uniform mode
  int patch_count = 6;      // patchy mode
  double patch_radius = 1.0;
  double keep_prob = 0.1;
  std::uint64_t seed = 0;

  static DegradationProfile dry() { return {}; }
  static DegradationProfile rainy(std::uint64_t seed = 0) {
    DegradationProfile p;
    p.mode = DegradationMode::kPatchy;
    p.seed = seed;
    return p;
  }
  /// Same profile with a seed derived for scene `index`.
  DegradationProfile for_scene(std::uint64_t index) const {
    DegradationProfile p = *this;
    p.seed = Rng(seed).split({streams::kDegrade, index}).next_u64();
    return p;
  }
};

namespace detail {

inline double range_factor(const SceneRecipe& r, double dist) {
  const double d = std::max(dist, r.reference_range);
  return (r.reference_range / d) * (r.reference_range / d);
}

inline std::size_t sample_count(Rng& rng, double expected) {
  // expected value preserved: floor plus a Bernoulli on the fraction
  const double f = std::floor(expected);
  return static_cast<std::size_t>(f) + (rng.uniform() < expected - f ? 1 : 0);
}

inline void push_point(PointCloud& cloud, const Vec3& p, float intensity, bool with_intensity) {
  if (with_intensity) {
    const float props[1] = {intensity};
    cloud.push_back(static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z), props);
  } else {
    cloud.push_back(static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z));
  }
}

inline Vec3 to_world(const OrientedBox& b, double lx, double ly, double lz) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return {b.cx + c * lx - s * ly, b.cy + s * lx + c * ly, b.cz + lz};
}

// Samples the roof and the sensor-facing side faces of a box.
inline void sample_object(const SceneRecipe& r, const OrientedBox& b, Rng& rng, PointCloud& cloud) {
  const double hl = 0.5 * b.length * 0.995, hw = 0.5 * b.width * 0.995, hh = 0.5 * b.height * 0.995;
  const double factor = range_factor(r, std::hypot(b.cx, b.cy));
  const std::size_t before = cloud.size();
  const auto emit = [&](double lx, double ly, double lz) {
    const Vec3 p = to_world(b, lx, ly, lz);
    push_point(cloud, p, static_cast<float>(rng.uniform(0.3, 1.0)), r.intensity);
  };
  // roof
  for (std::size_t n = sample_count(rng, r.surface_density * factor * b.length * b.width), i = 0; i < n; ++i) {
    emit(rng.uniform(-hl, hl), rng.uniform(-hw, hw), hh);
  }
  // sides: local normals (+-x, +-y); visible if facing the sensor at the origin
  struct Face {
    double nx, ny, extent;
    bool along_x;
  };
  const Face faces[4] = {{1, 0, b.width, true}, {-1, 0, b.width, true}, {0, 1, b.length, false}, {0, -1, b.length, false}};
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  for (const auto& f : faces) {
    const double wnx = c * f.nx - s * f.ny, wny = s * f.nx + c * f.ny;
    const Vec3 face_center = to_world(b, f.nx * hl, f.ny * hw, 0);
    if (wnx * face_center.x + wny * face_center.y >= 0) continue;  // facing away
    const std::size_t n = sample_count(rng, r.surface_density * factor * f.extent * b.height);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = f.along_x ? rng.uniform(-hw, hw) : rng.uniform(-hl, hl);
      const double z = rng.uniform(-hh, hh);
      if (f.along_x) emit(f.nx * hl, t, z);
      else emit(t, f.ny * hw, z);
    }
  }
  if (cloud.size() == before) emit(0, 0, hh);  // every object gets at least one return
}

}  // namespace detail

/// Scene `index` of the stream defined by `recipe.seed`.
inline Scene make_scene(const SceneRecipe& recipe, std::uint64_t index = 0) {
  recipe.validate();
  Rng rng = Rng(recipe.seed).split({streams::kScene, index});
  Scene scene;
  scene.cloud = PointCloud(recipe.intensity ? 1 : 0);
  scene.meta["generator"] = "synth";
  scene.meta["seed"] = std::to_string(recipe.seed);
  scene.meta["index"] = std::to_string(index);

  const int n_objects = static_cast<int>(rng.integer(recipe.min_objects, recipe.max_objects));
  for (int k = 0; k < n_objects; ++k) {
    const bool ped = rng.uniform() < recipe.pedestrian_fraction;
    OrientedBox b;
    b.class_id = ped ? 2 : 1;
    b.length = (ped ? recipe.pedestrian_length : recipe.vehicle_length).sample(rng);
    b.width = (ped ? recipe.pedestrian_width : recipe.vehicle_width).sample(rng);
    b.height = (ped ? recipe.pedestrian_height : recipe.vehicle_height).sample(rng);
    b.yaw = normalize_yaw(rng.uniform(-kPi, kPi));
    b.cz = recipe.ground_z + 0.5 * b.height;
    const double radius = 0.5 * std::hypot(b.length, b.width);
    bool placed = false;
    for (int attempt = 0; attempt < recipe.max_retries && !placed; ++attempt) {
      b.cx = rng.uniform(recipe.extent_x.lo + radius, recipe.extent_x.hi - radius);
      b.cy = rng.uniform(recipe.extent_y.lo + radius, recipe.extent_y.hi - radius);
      placed = true;
      for (const auto& o : scene.boxes) {
        const double ro = 0.5 * std::hypot(o.length, o.width);
        if (std::hypot(o.cx - b.cx, o.cy - b.cy) <= radius + ro + recipe.object_gap) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) {
      throw DataError("could not place object " + std::to_string(k) + " without overlap (seed " +
                      std::to_string(recipe.seed) + ", scene " + std::to_string(index) + ")");
    }
    scene.boxes.push_back(b);
  }
  for (const auto& b : scene.boxes) detail::sample_object(recipe, b, rng, scene.cloud);

  auto background = [&](const Vec3& p, float intensity) {
    if (!point_in_any_box(p, scene.boxes)) detail::push_point(scene.cloud, p, intensity, recipe.intensity);
  };
  // ground: rejection-sampled against the range falloff
  const double area = (recipe.extent_x.hi - recipe.extent_x.lo) * (recipe.extent_y.hi - recipe.extent_y.lo);
  const std::size_t candidates = detail::sample_count(rng, recipe.ground_density * area);
  for (std::size_t i = 0; i < candidates; ++i) {
    const Vec3 p{recipe.extent_x.sample(rng), recipe.extent_y.sample(rng), recipe.ground_z + 0.03 * rng.uniform()};
    if (rng.uniform() < detail::range_factor(recipe, std::hypot(p.x, p.y))) {
      background(p, static_cast<float>(rng.uniform(0.0, 0.3)));
    }
  }
  for (int k = 0; k < recipe.clutter_poles; ++k) {
    const double px = recipe.extent_x.sample(rng), py = recipe.extent_y.sample(rng);
    for (int i = 0; i < recipe.points_per_pole; ++i) {
      background({px + 0.1 * rng.uniform(), py + 0.1 * rng.uniform(), recipe.ground_z + 3.0 * rng.uniform()},
                 static_cast<float>(rng.uniform(0.1, 0.6)));
    }
  }
  return scene;
}

/// Removes points per the profile; boxes and meta are kept.
inline Scene degrade(const Scene& scene, const DegradationProfile& profile) {
  Scene out = scene;
  switch (profile.mode) {
    case DegradationMode::kNone:
      return out;
    case DegradationMode::kUniform:
      out.cloud = rnd_drop(scene.cloud, profile.rate, profile.seed);
      out.meta["degradation"] = "uniform";
      return out;
    case DegradationMode::kPatchy:
      break;
  }
  if (profile.patch_radius <= 0 || profile.keep_prob < 0 || profile.keep_prob > 1 || profile.patch_count < 0) {
    throw UsageError("invalid patchy degradation profile");
  }
  const auto& cloud = scene.cloud;
  Rng rng = Rng(profile.seed).split(streams::kDegrade);
  // polar patches anchored at random returns: |range - r_c| <= radius and
  // |azimuth - a_c| * r_c <= radius
  struct Patch {
    double range, azimuth, half_angle;
  };
  std::vector<Patch> patches;
  if (!cloud.empty()) {
    for (int k = 0; k < profile.patch_count; ++k) {
      const auto i = static_cast<std::size_t>(rng.below(cloud.size()));
      const double r = std::max<double>(std::hypot(cloud.x(i), cloud.y(i)), profile.patch_radius);
      patches.push_back({r, std::atan2(double{cloud.y(i)}, double{cloud.x(i)}), profile.patch_radius / r});
    }
  }
  std::vector<std::size_t> keep;
  keep.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.xyz(i);
    const double r = std::hypot(p.x, p.y);
    const double a = std::atan2(p.y, p.x);
    bool inside = false;
    for (const auto& patch : patches) {
      const double da = std::abs(normalize_yaw(a - patch.azimuth));
      if (std::abs(r - patch.range) <= profile.patch_radius && da <= patch.half_angle) {
        inside = true;
        break;
      }
    }
    // one draw per point keeps the stream independent of patch membership
    const bool drop = rng.uniform() >= profile.keep_prob;
    if (!(inside && drop)) keep.push_back(i);
  }
  out.cloud = cloud.select(keep);
  out.meta["degradation"] = "patchy";
  return out;
}

}  // namespace spg

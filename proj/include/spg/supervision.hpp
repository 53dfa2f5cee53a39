#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "spg/errors.hpp"
#include "spg/geometry.hpp"
#include "spg/rng.hpp"
#include "spg/voxelgrid.hpp"

namespace spg {

enum class VoxelCategory : std::uint8_t {
  kOccupiedForeground = 0,
  kOccupiedBackground = 1,
  kEmptyForeground = 2,
  kEmptyBackground = 3,
};

inline bool is_occupied(VoxelCategory c) {
  return c == VoxelCategory::kOccupiedForeground || c == VoxelCategory::kOccupiedBackground;
}

inline bool is_foreground(VoxelCategory c) {
  return c == VoxelCategory::kOccupiedForeground || c == VoxelCategory::kEmptyForeground;
}

/// Centroid and mean properties of the foreground points in one voxel.
struct RegressionTarget {
  Vec3 chi_bar;
  std::vector<double> f_bar;
  bool valid = false;

  friend bool operator==(const RegressionTarget&, const RegressionTarget&) = default;
};

struct VoxelLabel {
  VoxelIndex voxel = 0;
  bool y_f = false;
  VoxelCategory category = VoxelCategory::kEmptyBackground;

  friend bool operator==(const VoxelLabel&, const VoxelLabel&) = default;
};

struct VoxelTarget {
  VoxelIndex voxel = 0;
  bool y_f = false;
  VoxelCategory category = VoxelCategory::kEmptyBackground;
  bool hidden = false;
  RegressionTarget target;

  friend bool operator==(const VoxelTarget&, const VoxelTarget&) = default;
};

struct HideConfig {
  double gamma_percent = 25.0;
  std::uint64_t rng_seed = 0;
};

struct HideResult {
  std::vector<VoxelIndex> hidden;  // ascending
  PointCloud cloud;                // points outside hidden voxels, original order
  std::vector<RegressionTarget> hidden_targets;  // aligned with `hidden`, from pre-hiding points
};

/// Per-voxel supervision for every voxel of the generation area, plus the
/// cloud the network is allowed to see.
struct SupervisionTargets {
  GridSpec spec;
  GenerationArea area;
  std::vector<VoxelTarget> voxels;  // aligned with area.voxels
  std::vector<VoxelIndex> hidden;   // ascending
  PointCloud observed;              // post-hiding cloud
};

/// A voxel is "in a box" when its center is.
inline bool voxel_in_boxes(const GridSpec& spec, VoxelIndex v, std::span<const OrientedBox> boxes) {
  return point_in_any_box(spec.voxel_center(v), boxes);
}

/// Foreground/background label and base category for every area voxel.
inline std::vector<VoxelLabel> label_voxels(const Scene& scene, const VoxelGrid& grid, const GenerationArea& area) {
  if (grid.point_count() != scene.cloud.size()) throw DataError("voxel grid was not built from this scene");
  const auto fg_points = foreground_mask(scene.cloud, scene.boxes);
  const auto& spec = grid.spec();
  std::vector<VoxelLabel> labels;
  labels.reserve(area.size());
  for (auto v : area.voxels) {
    const bool in_box = voxel_in_boxes(spec, v, scene.boxes);
    VoxelLabel l{v, false, VoxelCategory::kEmptyBackground};
    if (auto slot = grid.slot_of(v)) {
      bool fg = in_box;
      for (auto i : grid.points_in_slot(*slot)) {
        if (fg) break;
        fg = fg_points[i];
      }
      l.y_f = fg;
      l.category = fg ? VoxelCategory::kOccupiedForeground : VoxelCategory::kOccupiedBackground;
    } else {
      l.y_f = in_box;
      l.category = in_box ? VoxelCategory::kEmptyForeground : VoxelCategory::kEmptyBackground;
    }
    labels.push_back(l);
  }
  return labels;
}

namespace detail {

inline RegressionTarget voxel_target(const PointCloud& cloud, std::span<const std::size_t> points,
                                     const std::vector<bool>& fg_points) {
  RegressionTarget t;
  t.f_bar.assign(cloud.prop_count(), 0.0);
  std::size_t n = 0;
  double sx = 0, sy = 0, sz = 0;
  for (auto i : points) {
    if (!fg_points[i]) continue;
    ++n;
    sx += cloud.x(i);
    sy += cloud.y(i);
    sz += cloud.z(i);
    for (std::size_t k = 0; k < cloud.prop_count(); ++k) t.f_bar[k] += cloud.prop(i, k);
  }
  if (n == 0) {
    t.f_bar.clear();
    return t;
  }
  const double inv = 1.0 / static_cast<double>(n);
  t.chi_bar = {sx * inv, sy * inv, sz * inv};
  for (auto& f : t.f_bar) f *= inv;
  t.valid = true;
  return t;
}

}  // namespace detail

/// Regression target per labeled voxel; valid only where the voxel holds
/// foreground points.
inline std::vector<RegressionTarget> regression_targets(const Scene& scene, const VoxelGrid& grid,
                                                        std::span<const VoxelLabel> labels) {
  if (grid.point_count() != scene.cloud.size()) throw DataError("voxel grid was not built from this scene");
  const auto fg_points = foreground_mask(scene.cloud, scene.boxes);
  std::vector<RegressionTarget> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(detail::voxel_target(scene.cloud, grid.points_in(l.voxel), fg_points));
  return out;
}

/// Number of voxels hidden for a given occupancy, rounding half up.
inline std::size_t hidden_count(double gamma_percent, std::size_t occupied) {
  return static_cast<std::size_t>(std::floor(gamma_percent * static_cast<double>(occupied) / 100.0 + 0.5));
}

/// Hides all points of a random gamma% of the occupied voxels.
inline HideResult hide_and_predict(const Scene& scene, const VoxelGrid& grid, const HideConfig& cfg) {
  if (!(cfg.gamma_percent >= 0.0 && cfg.gamma_percent <= 100.0)) {
    throw UsageError("gamma_percent must lie in [0, 100]");
  }
  if (grid.point_count() != scene.cloud.size()) throw DataError("voxel grid was not built from this scene");
  const auto& occ = grid.occupied();
  const std::size_t k = std::min(hidden_count(cfg.gamma_percent, occ.size()), occ.size());

  // partial Fisher-Yates over the occupied list
  std::vector<VoxelIndex> pool = occ;
  Rng rng(cfg.rng_seed);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  HideResult res;
  res.hidden.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(res.hidden.begin(), res.hidden.end());

  std::vector<std::size_t> keep;
  keep.reserve(scene.cloud.size());
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const auto v = grid.voxel_of(i);
    if (v == kOutOfGrid || !std::binary_search(res.hidden.begin(), res.hidden.end(), v)) keep.push_back(i);
  }
  res.cloud = scene.cloud.select(keep);

  const auto fg_points = foreground_mask(scene.cloud, scene.boxes);
  res.hidden_targets.reserve(k);
  for (auto v : res.hidden) res.hidden_targets.push_back(detail::voxel_target(scene.cloud, grid.points_in(v), fg_points));
  return res;
}

struct TargetOptions {
  int area_radius = 6;
  AreaMode area_mode = AreaMode::kVoxel3d;
  bool expansion = true;
  HideConfig hide;
};

/// voxelize -> hide -> generation area (pre-hiding occupancy) -> labels -> regression targets.
/// Without expansion the area is the occupied set only.
inline SupervisionTargets build_targets(const Scene& scene, const GridSpec& spec, const TargetOptions& opt) {
  const VoxelGrid grid = voxelize(scene.cloud, spec);
  HideResult hide = hide_and_predict(scene, grid, opt.hide);
  GenerationArea area = generation_area(grid, opt.expansion ? opt.area_radius : 0, opt.area_mode);
  const auto labels = label_voxels(scene, grid, area);
  auto targets = regression_targets(scene, grid, labels);

  SupervisionTargets out;
  out.spec = spec;
  out.voxels.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool hidden = std::binary_search(hide.hidden.begin(), hide.hidden.end(), labels[i].voxel);
    out.voxels.push_back({labels[i].voxel, labels[i].y_f, labels[i].category, hidden, std::move(targets[i])});
  }
  out.area = std::move(area);
  out.hidden = std::move(hide.hidden);
  out.observed = std::move(hide.cloud);
  return out;
}

inline SupervisionTargets build_targets(const Scene& scene, const GridSpec& spec, int area_radius,
                                        const HideConfig& hide, bool expansion_enabled) {
  return build_targets(scene, spec, TargetOptions{area_radius, AreaMode::kVoxel3d, expansion_enabled, hide});
}

}  // namespace spg

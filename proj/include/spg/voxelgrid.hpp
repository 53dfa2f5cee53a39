#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "spg/errors.hpp"
#include "spg/geometry.hpp"

namespace spg {

using VoxelIndex = std::int64_t;
inline constexpr VoxelIndex kOutOfGrid = -1;

struct VoxelCoord {
  std::int64_t x = 0, y = 0, z = 0;
  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
};

/// Regular grid geometry. Cells are half-open: [origin + i*size, origin + (i+1)*size).
/// Linear voxel index is (z * ny + y) * nx + x.
struct GridSpec {
  Vec3 origin;
  Vec3 voxel_size{0.32, 0.32, 0.4};
  std::array<std::int64_t, 3> dims{1, 1, 1};

  std::int64_t nx() const { return dims[0]; }
  std::int64_t ny() const { return dims[1]; }
  std::int64_t nz() const { return dims[2]; }
  std::int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

  void validate() const {
    if (!(voxel_size.x > 0 && voxel_size.y > 0 && voxel_size.z > 0)) {
      throw UsageError("voxel size must be positive on every axis");
    }
    for (auto n : dims) {
      if (n <= 0) throw UsageError("grid dims must be positive");
    }
    const auto cap = std::numeric_limits<std::int64_t>::max();
    if (dims[0] > cap / dims[1] || dims[0] * dims[1] > cap / dims[2]) {
      throw UsageError("grid too large for the index type");
    }
  }

  VoxelIndex linear(const VoxelCoord& c) const { return (c.z * ny() + c.y) * nx() + c.x; }
  VoxelIndex linear(std::int64_t x, std::int64_t y, std::int64_t z) const { return linear({x, y, z}); }

  VoxelCoord coord(VoxelIndex v) const {
    const std::int64_t x = v % nx();
    const std::int64_t rest = v / nx();
    return {x, rest % ny(), rest / ny()};
  }

  bool in_grid(const VoxelCoord& c) const {
    return c.x >= 0 && c.x < nx() && c.y >= 0 && c.y < ny() && c.z >= 0 && c.z < nz();
  }

  Vec3 voxel_min(VoxelIndex v) const {
    const auto c = coord(v);
    return {origin.x + c.x * voxel_size.x, origin.y + c.y * voxel_size.y, origin.z + c.z * voxel_size.z};
  }

  Vec3 voxel_center(VoxelIndex v) const {
    const auto lo = voxel_min(v);
    return {lo.x + 0.5 * voxel_size.x, lo.y + 0.5 * voxel_size.y, lo.z + 0.5 * voxel_size.z};
  }

  /// Voxel holding `p`, or nullopt when `p` falls outside the grid.
  std::optional<VoxelCoord> locate(const Vec3& p) const {
    const double fx = std::floor((p.x - origin.x) / voxel_size.x);
    const double fy = std::floor((p.y - origin.y) / voxel_size.y);
    const double fz = std::floor((p.z - origin.z) / voxel_size.z);
    if (!(fx >= 0 && fx < static_cast<double>(nx()) && fy >= 0 && fy < static_cast<double>(ny()) &&
          fz >= 0 && fz < static_cast<double>(nz()))) {
      return std::nullopt;
    }
    return VoxelCoord{static_cast<std::int64_t>(fx), static_cast<std::int64_t>(fy),
                      static_cast<std::int64_t>(fz)};
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Points bucketed into a GridSpec. Immutable after voxelize().
class VoxelGrid {
 public:
  const GridSpec& spec() const { return spec_; }
  std::size_t point_count() const { return point_to_voxel_.size(); }

  /// Voxel of point i, or kOutOfGrid.
  VoxelIndex voxel_of(std::size_t i) const { return point_to_voxel_[i]; }
  const std::vector<VoxelIndex>& point_to_voxel() const { return point_to_voxel_; }

  /// Occupied voxel indices, ascending.
  const std::vector<VoxelIndex>& occupied() const { return occupied_; }

  /// Position of `v` in occupied(), if occupied.
  std::optional<std::size_t> slot_of(VoxelIndex v) const {
    auto it = std::lower_bound(occupied_.begin(), occupied_.end(), v);
    if (it == occupied_.end() || *it != v) return std::nullopt;
    return static_cast<std::size_t>(it - occupied_.begin());
  }

  bool is_occupied(VoxelIndex v) const { return slot_of(v).has_value(); }

  /// Point indices (ascending) inside the slot-th occupied voxel.
  std::span<const std::size_t> points_in_slot(std::size_t slot) const {
    return {point_indices_.data() + offsets_[slot], offsets_[slot + 1] - offsets_[slot]};
  }

  std::span<const std::size_t> points_in(VoxelIndex v) const {
    auto s = slot_of(v);
    if (!s) return {};
    return points_in_slot(*s);
  }

  std::size_t out_of_grid_count() const {
    return static_cast<std::size_t>(std::count(point_to_voxel_.begin(), point_to_voxel_.end(), kOutOfGrid));
  }

  friend VoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec);

 private:
  GridSpec spec_;
  std::vector<VoxelIndex> point_to_voxel_;
  std::vector<VoxelIndex> occupied_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> point_indices_;
};

inline VoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec) {
  spec.validate();
  VoxelGrid g;
  g.spec_ = spec;
  g.point_to_voxel_.resize(cloud.size(), kOutOfGrid);
  std::vector<std::pair<VoxelIndex, std::size_t>> pairs;
  pairs.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto c = spec.locate(cloud.xyz(i))) {
      const VoxelIndex v = spec.linear(*c);
      g.point_to_voxel_[i] = v;
      pairs.emplace_back(v, i);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  g.offsets_.push_back(0);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (k == 0 || pairs[k].first != pairs[k - 1].first) {
      if (k != 0) g.offsets_.push_back(k);
      g.occupied_.push_back(pairs[k].first);
    }
    g.point_indices_.push_back(pairs[k].second);
  }
  if (!pairs.empty()) g.offsets_.push_back(pairs.size());
  return g;
}

/// How "steps" are counted when dilating occupancy.
enum class AreaMode {
  kVoxel3d,  // 3D Chebyshev distance
  kBev2d,    // Chebyshev distance in x/y only, same z level
};

/// Voxels eligible for point generation.
struct GenerationArea {
  std::vector<VoxelIndex> voxels;  // ascending
  int radius = 0;
  AreaMode mode = AreaMode::kVoxel3d;

  bool contains(VoxelIndex v) const { return std::binary_search(voxels.begin(), voxels.end(), v); }
  std::size_t size() const { return voxels.size(); }
};

namespace detail {

// In-place 1D max filter of half-width r along one axis of a dense mask.
inline void dilate_axis(std::vector<std::uint8_t>& mask, const GridSpec& s, int axis, int r) {
  const std::int64_t n = s.dims[axis];
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? s.nx() : s.nx() * s.ny());
  std::vector<std::uint8_t> line(n), out(n);
  for (VoxelIndex base = 0; base < s.voxel_count(); ++base) {
    // visit each line once, from its first element
    if ((base / stride) % n != 0) continue;
    for (std::int64_t i = 0; i < n; ++i) line[i] = mask[base + i * stride];
    // running count of set cells in the window [i-r, i+r]
    std::int64_t count = 0;
    for (std::int64_t i = 0; i <= std::min<std::int64_t>(r, n - 1); ++i) count += line[i];
    for (std::int64_t i = 0; i < n; ++i) {
      out[i] = count > 0;
      const std::int64_t add = i + r + 1, drop = i - r;
      if (add < n) count += line[add];
      if (drop >= 0) count -= line[drop];
    }
    for (std::int64_t i = 0; i < n; ++i) mask[base + i * stride] = out[i];
  }
}

}  // namespace detail

/// Occupied voxels dilated by `radius` steps (Chebyshev), clipped to the grid.
inline GenerationArea generation_area(const VoxelGrid& grid, int radius, AreaMode mode = AreaMode::kVoxel3d) {
  if (radius < 0) throw UsageError("generation area radius must be non-negative");
  GenerationArea area{{}, radius, mode};
  if (radius == 0 || grid.occupied().empty()) {
    area.voxels = grid.occupied();
    return area;
  }
  const auto& s = grid.spec();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(s.voxel_count()), 0);
  for (auto v : grid.occupied()) mask[v] = 1;
  detail::dilate_axis(mask, s, 0, radius);
  detail::dilate_axis(mask, s, 1, radius);
  if (mode == AreaMode::kVoxel3d) detail::dilate_axis(mask, s, 2, radius);
  for (VoxelIndex v = 0; v < s.voxel_count(); ++v) {
    if (mask[v]) area.voxels.push_back(v);
  }
  return area;
}

/// One BEV column: the z-ordered voxel slots at (x, y).
struct Pillar {
  std::int64_t x = 0, y = 0;
  std::vector<VoxelIndex> slots;  // ascending z
};

/// All pillars of the grid, ordered by BEV linear index y * nx + x.
inline std::vector<Pillar> pillar_index(const GridSpec& s) {
  std::vector<Pillar> out;
  out.reserve(static_cast<std::size_t>(s.nx() * s.ny()));
  for (std::int64_t y = 0; y < s.ny(); ++y) {
    for (std::int64_t x = 0; x < s.nx(); ++x) {
      Pillar p{x, y, {}};
      p.slots.reserve(static_cast<std::size_t>(s.nz()));
      for (std::int64_t z = 0; z < s.nz(); ++z) p.slots.push_back(s.linear(x, y, z));
      out.push_back(std::move(p));
    }
  }
  return out;
}

inline std::vector<Pillar> pillar_index(const VoxelGrid& grid) { return pillar_index(grid.spec()); }

}  // namespace spg

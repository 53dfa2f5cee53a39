#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spg/errors.hpp"

namespace spg {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// One point with its property channels copied out of a cloud.
struct Point {
  double x = 0, y = 0, z = 0;
  std::vector<double> props;

  Vec3 xyz() const { return {x, y, z}; }
};

/// Point cloud with xyz plus `prop_count` extra channels per point, stored
/// interleaved as 32-bit floats (the LiDAR sensor convention).
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::size_t prop_count) : prop_count_(prop_count) {}

  std::size_t prop_count() const { return prop_count_; }
  std::size_t stride() const { return 3 + prop_count_; }
  std::size_t size() const { return values_.size() / stride(); }
  bool empty() const { return values_.empty(); }

  float x(std::size_t i) const { return values_[i * stride()]; }
  float y(std::size_t i) const { return values_[i * stride() + 1]; }
  float z(std::size_t i) const { return values_[i * stride() + 2]; }
  float prop(std::size_t i, std::size_t k) const { return values_[i * stride() + 3 + k]; }
  Vec3 xyz(std::size_t i) const { return {x(i), y(i), z(i)}; }

  std::span<const float> record(std::size_t i) const {
    return {values_.data() + i * stride(), stride()};
  }

  Point point(std::size_t i) const {
    Point p{x(i), y(i), z(i), {}};
    p.props.reserve(prop_count_);
    for (std::size_t k = 0; k < prop_count_; ++k) p.props.push_back(prop(i, k));
    return p;
  }

  /// Appends one point. Rejects wrong channel count and non-finite values.
  void push_back(float px, float py, float pz, std::span<const float> props = {}) {
    if (props.size() != prop_count_) throw DataError("point property count mismatch");
    if (!std::isfinite(px) || !std::isfinite(py) || !std::isfinite(pz)) {
      throw DataError("non-finite point coordinate");
    }
    for (float v : props) {
      if (!std::isfinite(v)) throw DataError("non-finite point property");
    }
    values_.push_back(px);
    values_.push_back(py);
    values_.push_back(pz);
    values_.insert(values_.end(), props.begin(), props.end());
  }

  void push_record(std::span<const float> rec) {
    if (rec.size() != stride()) throw DataError("point record width mismatch");
    push_back(rec[0], rec[1], rec[2], rec.subspan(3));
  }

  void reserve(std::size_t n) { values_.reserve(n * stride()); }

  const std::vector<float>& values() const { return values_; }

  /// Subset in the given index order.
  PointCloud select(std::span<const std::size_t> indices) const {
    PointCloud out(prop_count_);
    out.values_.reserve(indices.size() * stride());
    for (auto i : indices) {
      auto r = record(i);
      out.values_.insert(out.values_.end(), r.begin(), r.end());
    }
    return out;
  }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::size_t prop_count_ = 0;
  std::vector<float> values_;
};

/// Wraps an angle to [-pi, pi).
inline double normalize_yaw(double yaw) {
  double r = std::fmod(yaw + kPi, 2.0 * kPi);
  if (r < 0) r += 2.0 * kPi;
  r -= kPi;
  return r >= kPi ? -kPi : r;
}

/// 7-DOF box rotated about z by `yaw`. `length` runs along the box's local x.
struct OrientedBox {
  double cx = 0, cy = 0, cz = 0;
  double length = 1, width = 1, height = 1;
  double yaw = 0;
  int class_id = 0;

  Vec3 center() const { return {cx, cy, cz}; }

  void validate() const {
    if (!(length > 0 && width > 0 && height > 0)) throw DataError("box dimensions must be positive");
    if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(cz) || !std::isfinite(yaw)) {
      throw DataError("non-finite box parameter");
    }
    if (!(yaw >= -kPi && yaw < kPi)) throw DataError("box yaw outside [-pi, pi)");
  }

  /// Point in the box frame: translated by -center, rotated by -yaw.
  Vec3 to_local(const Vec3& p) const {
    const double dx = p.x - cx, dy = p.y - cy;
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * dx + s * dy, -s * dx + c * dy, p.z - cz};
  }

  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;
};

/// Closed-box containment test (boundary counts as inside).
inline bool point_in_box(const Vec3& p, const OrientedBox& b) {
  const Vec3 q = b.to_local(p);
  return std::abs(q.x) <= 0.5 * b.length && std::abs(q.y) <= 0.5 * b.width &&
         std::abs(q.z) <= 0.5 * b.height;
}

inline bool point_in_any_box(const Vec3& p, std::span<const OrientedBox> boxes) {
  for (const auto& b : boxes) {
    if (point_in_box(p, b)) return true;
  }
  return false;
}

inline std::vector<bool> foreground_mask(const PointCloud& cloud, std::span<const OrientedBox> boxes) {
  std::vector<bool> mask(cloud.size(), false);
  for (std::size_t i = 0; i < cloud.size(); ++i) mask[i] = point_in_any_box(cloud.xyz(i), boxes);
  return mask;
}

/// One LiDAR frame: points, ground-truth boxes and free-form tags.
struct Scene {
  PointCloud cloud;
  std::vector<OrientedBox> boxes;
  std::map<std::string, std::string> meta;

  friend bool operator==(const Scene&, const Scene&) = default;
};

}  // namespace spg

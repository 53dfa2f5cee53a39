#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "spg/errors.hpp"
#include "spg/geometry.hpp"
#include "spg/prediction.hpp"
#include "spg/rng.hpp"

namespace spg {

struct SemanticPoint {
  VoxelIndex voxel = 0;
  Vec3 chi;
  std::vector<double> f;
  double p_fg = 0;
};

struct GenerationConfig {
  double p_thresh = 0.5;
  std::size_t k_max = 8000;
  bool confidence_channel = true;

  void validate() const {
    if (!(p_thresh > 0.0 && p_thresh < 1.0)) throw UsageError("p_thresh must lie in (0, 1)");
    if (k_max == 0) throw UsageError("k_max must be positive");
  }
};

/// Dataset profiles for the semantic point budget.
inline constexpr std::size_t kMaxSemanticPointsWaymo = 8000;
inline constexpr std::size_t kMaxSemanticPointsKitti = 6000;

/// Keeps p_fg > p_thresh, highest first (ties by ascending voxel index), at most k_max.
inline std::vector<SemanticPoint> select_points(std::span<const VoxelPrediction> preds, const GenerationConfig& cfg) {
  cfg.validate();
  std::vector<const VoxelPrediction*> kept;
  for (const auto& p : preds) {
    if (p.p_fg > cfg.p_thresh) kept.push_back(&p);
  }
  auto before = [](const VoxelPrediction* a, const VoxelPrediction* b) {
    if (a->p_fg != b->p_fg) return a->p_fg > b->p_fg;
    return a->voxel < b->voxel;
  };
  if (kept.size() > cfg.k_max) {
    std::partial_sort(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(cfg.k_max), kept.end(), before);
    kept.resize(cfg.k_max);
  } else {
    std::sort(kept.begin(), kept.end(), before);
  }
  std::vector<SemanticPoint> out;
  out.reserve(kept.size());
  for (const auto* p : kept) out.push_back({p->voxel, p->chi_hat, p->f_hat, p->p_fg});
  return out;
}

/// Original points followed by semantic points, optionally with a trailing
/// confidence channel (1.0 for original points, p_fg for semantic ones).
class AugmentedCloud {
 public:
  AugmentedCloud() = default;
  AugmentedCloud(PointCloud points, std::size_t semantic_begin, bool has_confidence)
      : points_(std::move(points)), semantic_begin_(semantic_begin), has_confidence_(has_confidence) {
    if (semantic_begin_ > points_.size()) throw DataError("semantic boundary beyond point count");
    if (has_confidence_ && points_.prop_count() == 0) throw DataError("confidence channel missing");
  }

  /// Records are [x, y, z, props..., confidence?].
  const PointCloud& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  std::size_t semantic_begin() const { return semantic_begin_; }
  std::size_t semantic_count() const { return points_.size() - semantic_begin_; }
  bool has_confidence() const { return has_confidence_; }
  /// Property channels of the source cloud, excluding confidence.
  std::size_t source_prop_count() const { return points_.prop_count() - (has_confidence_ ? 1 : 0); }

  friend bool operator==(const AugmentedCloud&, const AugmentedCloud&) = default;

 private:
  PointCloud points_;
  std::size_t semantic_begin_ = 0;
  bool has_confidence_ = false;
};

inline AugmentedCloud augment(const PointCloud& cloud, std::span<const SemanticPoint> sem, const GenerationConfig& cfg) {
  const std::size_t F = cloud.prop_count();
  for (const auto& s : sem) {
    if (s.f.size() != F) throw DataError("semantic point property count does not match the cloud");
  }
  PointCloud out(F + (cfg.confidence_channel ? 1 : 0));
  out.reserve(cloud.size() + sem.size());
  std::vector<float> rec;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto r = cloud.record(i);
    rec.assign(r.begin(), r.end());
    if (cfg.confidence_channel) rec.push_back(1.0f);
    out.push_record(rec);
  }
  for (const auto& s : sem) {
    rec = {static_cast<float>(s.chi.x), static_cast<float>(s.chi.y), static_cast<float>(s.chi.z)};
    for (double f : s.f) rec.push_back(static_cast<float>(f));
    if (cfg.confidence_channel) rec.push_back(static_cast<float>(s.p_fg));
    out.push_record(rec);
  }
  return AugmentedCloud(std::move(out), cloud.size(), cfg.confidence_channel);
}

/// Drops every point independently with probability `rate`.
inline PointCloud rnd_drop(const PointCloud& cloud, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw UsageError("drop rate must lie in [0, 1]");
  Rng rng = Rng(seed).split(streams::kDrop);
  std::vector<std::size_t> keep;
  keep.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    // one draw per point regardless of rate keeps streams aligned
    if (!(rng.uniform() < rate)) keep.push_back(i);
  }
  return cloud.select(keep);
}

}  // namespace spg

#pragma once

// Small builders shared by the unit tests and the acceptance binary.

#include <initializer_list>
#include <utility>
#include <vector>

#include "spg/spg.hpp"

namespace spg::fixture {

using DTensor = Tensor<double>;
using Probes = std::vector<std::pair<DTensor, std::size_t>>;

inline DTensor random_tensor(Rng& rng, Shape s, double lo = -1, double hi = 1) {
  auto t = DTensor::zeros(std::move(s), true);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Random linear functional of `out`, so every output element matters.
inline DTensor project(Tape<double>& tape, DTensor out, std::uint64_t seed) {
  Rng rng(seed);
  auto w = DTensor::zeros(out.shape());
  for (auto& v : w.data()) v = rng.uniform(-1, 1);
  return ops::sum(tape, ops::mul(tape, out, w));
}

inline Probes all_of(std::initializer_list<DTensor> ts) {
  Probes p;
  for (const auto& t : ts) {
    for (std::size_t i = 0; i < t.numel(); ++i) p.emplace_back(t, i);
  }
  return p;
}

inline VoxelTarget vt(VoxelIndex v, VoxelCategory cat, bool hidden, bool valid = false, Vec3 chi = {},
                      std::vector<double> f = {}) {
  VoxelTarget t;
  t.voxel = v;
  t.category = cat;
  t.y_f = is_foreground(cat);
  t.hidden = hidden;
  t.target.valid = valid;
  t.target.chi_bar = chi;
  t.target.f_bar = std::move(f);
  return t;
}

inline VoxelPrediction vp(VoxelIndex v, double p, Vec3 chi = {}, std::vector<double> f = {}) {
  return {v, p, chi, std::move(f)};
}

// Six voxels, one per role in the classification objective.
struct SixVoxels {
  SupervisionTargets targets;
  std::vector<VoxelPrediction> preds;
};

inline SixVoxels six_voxels() {
  using C = VoxelCategory;
  SixVoxels s;
  s.targets.spec = GridSpec{{0, 0, 0}, {1, 1, 1}, {6, 1, 1}};
  s.targets.observed = PointCloud(0);
  s.targets.voxels = {vt(0, C::kOccupiedForeground, false), vt(1, C::kOccupiedBackground, false),
                      vt(2, C::kEmptyBackground, false),    vt(3, C::kEmptyForeground, false),
                      vt(4, C::kOccupiedForeground, true),  vt(5, C::kOccupiedBackground, true)};
  s.preds = {vp(0, 0.8), vp(1, 0.3), vp(2, 0.1), vp(3, 0.6), vp(4, 0.4), vp(5, 0.2)};
  return s;
}

// FL(p, 1) = -0.25 (1-p)^2 ln p,  FL(p, 0) = -0.75 p^2 ln(1-p), written out per voxel.
inline double six_voxels_expected_loss() {
  const double fl0 = -0.25 * 0.2 * 0.2 * std::log(0.8);  // occupied fg, p .8
  const double fl1 = -0.75 * 0.3 * 0.3 * std::log(0.7);  // occupied bg, p .3
  const double fl2 = -0.75 * 0.1 * 0.1 * std::log(0.9);  // empty bg, p .1
  const double fl3 = -0.25 * 0.4 * 0.4 * std::log(0.6);  // empty fg, p .6
  const double fl4 = -0.25 * 0.6 * 0.6 * std::log(0.4);  // hidden fg, p .4
  const double fl5 = -0.75 * 0.2 * 0.2 * std::log(0.8);  // hidden bg, p .2
  return (fl0 + fl1 + fl2) / 3.0 + 0.5 * fl3 / 1.0 + 2.0 * (fl4 + fl5) / 2.0;
}

}  // namespace spg::fixture

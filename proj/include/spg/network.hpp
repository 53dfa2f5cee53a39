#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spg/errors.hpp"
#include "spg/geometry.hpp"
#include "spg/prediction.hpp"
#include "spg/rng.hpp"
#include "spg/tensor.hpp"
#include "spg/voxelgrid.hpp"

namespace spg {

enum class SkipMode { kConcat, kAdd };
enum class InitMode { kRandom, kZero };

struct NetworkConfig {
  std::size_t channel_width = 16;
  std::size_t level1_convs = 3;
  std::size_t level2_convs = 4;  // stride-1 convs after the stride-2 conv
  std::size_t kernel = 3;
  std::size_t points_per_voxel_cap = 32;
  SkipMode skip = SkipMode::kConcat;
  InitMode init = InitMode::kRandom;

  void validate() const {
    if (channel_width == 0) throw UsageError("channel_width must be positive");
    if (kernel == 0 || kernel % 2 == 0) throw UsageError("kernel must be odd");
    if (points_per_voxel_cap == 0) throw UsageError("points_per_voxel_cap must be positive");
    if (level1_convs == 0) throw UsageError("level1_convs must be at least 1");
  }
};

/// Named parameter set of the point generation network: a point-wise
/// encoder, a two-level BEV convolution stack and two 1x1 heads.
template <typename T>
class SpgModel {
 public:
  using Param = std::pair<std::string, Tensor<T>>;

  SpgModel() = default;

  /// Fresh parameters for grids with `nz` voxel layers and `prop_count` point properties.
  SpgModel(const NetworkConfig& cfg, std::size_t nz, std::size_t prop_count, std::uint64_t seed)
      : cfg_(cfg), nz_(nz), props_(prop_count) {
    cfg.validate();
    require(nz > 0, "network needs at least one z layer");
    const std::size_t C = cfg.channel_width, k = cfg.kernel;
    Rng rng = Rng(seed).split(streams::kInit);
    add("vfe.w", {3 + prop_count, C}, 3 + prop_count, rng);
    add("vfe.b", {C}, 0, rng);
    for (std::size_t i = 0; i < cfg.level1_convs; ++i) {
      const std::size_t cin = i == 0 ? C * nz : C;
      add("level1." + std::to_string(i) + ".w", {C, cin, k, k}, cin * k * k, rng);
      add("level1." + std::to_string(i) + ".b", {C}, 0, rng);
    }
    for (std::size_t i = 0; i <= cfg.level2_convs; ++i) {
      add("level2." + std::to_string(i) + ".w", {C, C, k, k}, C * k * k, rng);
      add("level2." + std::to_string(i) + ".b", {C}, 0, rng);
    }
    const std::size_t cs = skip_channels();
    add("head_prob.w", {nz, cs, 1, 1}, cs, rng, 0.1);
    add("head_prob.b", {nz}, 0, rng);
    add("head_feat.w", {nz * (3 + prop_count), cs, 1, 1}, cs, rng, 0.1);
    add("head_feat.b", {nz * (3 + prop_count)}, 0, rng);
  }

  const NetworkConfig& config() const { return cfg_; }
  std::size_t nz() const { return nz_; }
  std::size_t prop_count() const { return props_; }
  std::size_t skip_channels() const { return cfg_.skip == SkipMode::kConcat ? 2 * cfg_.channel_width : cfg_.channel_width; }

  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }

  Tensor<T>& param(const std::string& name) {
    for (auto& [n, t] : params_) {
      if (n == name) return t;
    }
    throw InvariantError("no parameter named " + name);
  }
  const Tensor<T>& param(const std::string& name) const { return const_cast<SpgModel*>(this)->param(name); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.second.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.second.zero_grad();
  }

 private:
  // Uniform(-a, a) with a = gain * sqrt(6 / fan_in); fan_in 0 means a bias (zero).
  void add(std::string name, Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0) {
    auto t = Tensor<T>::zeros(std::move(shape), true);
    if (cfg_.init == InitMode::kRandom && fan_in > 0) {
      const double a = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
      for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-a, a));
    }
    params_.emplace_back(std::move(name), std::move(t));
  }

  NetworkConfig cfg_;
  std::size_t nz_ = 0;
  std::size_t props_ = 0;
  std::vector<Param> params_;
};

/// BEV raster extent: the grid's (ny, nx) rounded up to even.
struct BevLayout {
  std::size_t height = 0, width = 0;

  static BevLayout of(const GridSpec& s) {
    const auto ny = static_cast<std::size_t>(s.ny()), nx = static_cast<std::size_t>(s.nx());
    return {ny + ny % 2, nx + nx % 2};
  }
  std::size_t cell(std::int64_t x, std::int64_t y) const {
    return static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x);
  }
  std::size_t cells() const { return height * width; }
};

/// Point-wise linear + relu on [xyz - voxel center, props], then max over each
/// occupied voxel's points. Voxels over points_per_voxel_cap keep the cap
/// smallest records in lexicographic order, so the result does not depend on
/// point order. Returns [occupied x C]; rows follow grid.occupied(). Undefined
/// when nothing is occupied.
template <typename T>
Tensor<T> vfe_encode(Tape<T>& tape, const SpgModel<T>& model, const VoxelGrid& grid, const PointCloud& cloud) {
  if (grid.point_count() != cloud.size()) throw InvariantError("vfe_encode: grid/cloud mismatch");
  if (cloud.prop_count() != model.prop_count()) throw InvariantError("vfe_encode: property count mismatch");
  const auto& occ = grid.occupied();
  if (occ.empty()) return {};
  const std::size_t cap = model.config().points_per_voxel_cap;
  const std::size_t width = 3 + cloud.prop_count();
  std::vector<T> rows;
  std::vector<std::size_t> offsets{0}, chosen;
  for (std::size_t s = 0; s < occ.size(); ++s) {
    const Vec3 c = grid.spec().voxel_center(occ[s]);
    auto span = grid.points_in_slot(s);
    chosen.assign(span.begin(), span.end());
    if (chosen.size() > cap) {
      std::partial_sort(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(cap), chosen.end(),
                        [&](std::size_t a, std::size_t b) {
                          auto ra = cloud.record(a), rb = cloud.record(b);
                          return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
                        });
      chosen.resize(cap);
    }
    const std::size_t n = chosen.size();
    for (const auto i : chosen) {
      rows.push_back(static_cast<T>(cloud.x(i) - c.x));
      rows.push_back(static_cast<T>(cloud.y(i) - c.y));
      rows.push_back(static_cast<T>(cloud.z(i) - c.z));
      for (std::size_t k = 0; k < cloud.prop_count(); ++k) rows.push_back(static_cast<T>(cloud.prop(i, k)));
    }
    offsets.push_back(offsets.back() + n);
  }
  auto input = Tensor<T>::from({offsets.back(), width}, std::move(rows));
  auto h = ops::matmul(tape, input, model.param("vfe.w"));
  h = ops::add_row_bias(tape, h, model.param("vfe.b"));
  h = ops::relu(tape, h);
  return ops::segment_max(tape, h, std::move(offsets));
}

/// Flat BEV positions of (voxel v, channel c) for v in `voxels`, channel-major within a voxel.
inline std::vector<std::size_t> bev_positions(const GridSpec& s, std::span<const VoxelIndex> voxels, std::size_t C) {
  const auto L = BevLayout::of(s);
  std::vector<std::size_t> pos;
  pos.reserve(voxels.size() * C);
  for (auto v : voxels) {
    const auto c = s.coord(v);
    for (std::size_t ch = 0; ch < C; ++ch) {
      pos.push_back((static_cast<std::size_t>(c.z) * C + ch) * L.cells() + L.cell(c.x, c.y));
    }
  }
  return pos;
}

/// Stacks each pillar's voxel features along channels: [(C * nz) x H x W].
template <typename T>
Tensor<T> scatter_to_bev(Tape<T>& tape, const Tensor<T>& feats, const GridSpec& s, std::span<const VoxelIndex> voxels,
                         std::size_t C) {
  const auto L = BevLayout::of(s);
  Shape shape{C * static_cast<std::size_t>(s.nz()), L.height, L.width};
  if (voxels.empty()) return Tensor<T>::zeros(shape);
  require(feats.rank() == 2 && feats.dim(0) == voxels.size() && feats.dim(1) == C, "scatter_to_bev: feature shape");
  return ops::index_scatter(tape, feats, shape, bev_positions(s, voxels, C));
}

/// Inverse of scatter_to_bev: [voxels x C] read back from a BEV map.
template <typename T>
Tensor<T> gather_from_bev(Tape<T>& tape, const Tensor<T>& bev, const GridSpec& s, std::span<const VoxelIndex> voxels,
                          std::size_t C) {
  return ops::index_gather(tape, bev, {voxels.size(), C}, bev_positions(s, voxels, C));
}

/// Level-1 stack at full resolution, level-2 stack at half resolution, upsampled
/// and joined with level-1 (concat or add).
template <typename T>
Tensor<T> propagate(Tape<T>& tape, const SpgModel<T>& model, Tensor<T> bev) {
  require(bev.rank() == 3 && bev.dim(1) % 2 == 0 && bev.dim(2) % 2 == 0, "propagate: BEV extent must be even");
  const auto& cfg = model.config();
  const std::size_t pad = cfg.kernel / 2;
  auto layer = [&](Tensor<T> x, const std::string& name, std::size_t stride) {
    x = ops::conv2d(tape, x, model.param(name + ".w"), stride, pad);
    x = ops::add_channel_bias(tape, x, model.param(name + ".b"));
    return ops::relu(tape, x);
  };
  Tensor<T> x1 = bev;
  for (std::size_t i = 0; i < cfg.level1_convs; ++i) x1 = layer(x1, "level1." + std::to_string(i), 1);
  Tensor<T> x2 = layer(x1, "level2.0", 2);
  for (std::size_t i = 1; i <= cfg.level2_convs; ++i) x2 = layer(x2, "level2." + std::to_string(i), 1);
  auto up = ops::upsample_nearest(tape, x2, 2);
  return cfg.skip == SkipMode::kConcat ? ops::concat0(tape, x1, up) : ops::add(tape, x1, up);
}

/// Differentiable per-voxel outputs for the generation area.
template <typename T>
struct HeadOutput {
  std::vector<VoxelIndex> voxels;
  Tensor<T> prob;   // [n]
  Tensor<T> chi;    // [n x 3], meters, inside each voxel
  Tensor<T> props;  // [n x F]; undefined when F == 0
};

/// 1x1 heads over the propagated map; each pillar emits nz logits and
/// nz * (3 + F) feature values. Locations pass through a sigmoid and map onto
/// the voxel's extent.
template <typename T>
HeadOutput<T> generate_heads(Tape<T>& tape, const SpgModel<T>& model, const Tensor<T>& features, const GridSpec& s,
                             const GenerationArea& area) {
  HeadOutput<T> out;
  out.voxels = area.voxels;
  const std::size_t n = area.voxels.size();
  if (n == 0) return out;
  const auto L = BevLayout::of(s);
  const std::size_t F = model.prop_count(), D = 3 + F;

  auto logits = ops::add_channel_bias(tape, ops::conv2d(tape, features, model.param("head_prob.w"), 1, 0),
                                      model.param("head_prob.b"));
  auto raw = ops::add_channel_bias(tape, ops::conv2d(tape, features, model.param("head_feat.w"), 1, 0),
                                   model.param("head_feat.b"));

  std::vector<std::size_t> prob_pos, chi_pos, prop_pos;
  std::vector<T> chi_mul, chi_add;
  prob_pos.reserve(n);
  chi_pos.reserve(3 * n);
  prop_pos.reserve(F * n);
  for (auto v : area.voxels) {
    const auto c = s.coord(v);
    const std::size_t cell = L.cell(c.x, c.y), z = static_cast<std::size_t>(c.z);
    prob_pos.push_back(z * L.cells() + cell);
    for (std::size_t k = 0; k < D; ++k) {
      const std::size_t pos = (z * D + k) * L.cells() + cell;
      (k < 3 ? chi_pos : prop_pos).push_back(pos);
    }
    const Vec3 lo = s.voxel_min(v);
    chi_mul.insert(chi_mul.end(), {static_cast<T>(s.voxel_size.x), static_cast<T>(s.voxel_size.y),
                                   static_cast<T>(s.voxel_size.z)});
    chi_add.insert(chi_add.end(), {static_cast<T>(lo.x), static_cast<T>(lo.y), static_cast<T>(lo.z)});
  }
  out.prob = ops::sigmoid(tape, ops::index_gather(tape, logits, {n}, std::move(prob_pos)));
  auto unit = ops::sigmoid(tape, ops::index_gather(tape, raw, {n, 3}, std::move(chi_pos)));
  out.chi = ops::affine_const(tape, unit, std::move(chi_mul), std::move(chi_add));
  if (F > 0) out.props = ops::index_gather(tape, raw, {n, F}, std::move(prop_pos));
  return out;
}

/// Full forward pass: the network sees `cloud` (already voxelized as `grid`)
/// and predicts every voxel of `area`.
template <typename T>
HeadOutput<T> forward(Tape<T>& tape, const SpgModel<T>& model, const VoxelGrid& grid, const PointCloud& cloud,
                      const GenerationArea& area) {
  const auto& s = grid.spec();
  if (static_cast<std::size_t>(s.nz()) != model.nz()) throw InvariantError("model was built for a different grid height");
  const std::size_t C = model.config().channel_width;
  auto feats = vfe_encode(tape, model, grid, cloud);
  auto bev = scatter_to_bev(tape, feats, s, grid.occupied(), C);
  auto features = propagate(tape, model, bev);
  return generate_heads(tape, model, features, s, area);
}

template <typename T>
std::vector<VoxelPrediction> to_predictions(const HeadOutput<T>& h) {
  std::vector<VoxelPrediction> out;
  out.reserve(h.voxels.size());
  const std::size_t F = h.props.defined() ? h.props.dim(1) : 0;
  for (std::size_t i = 0; i < h.voxels.size(); ++i) {
    VoxelPrediction p;
    p.voxel = h.voxels[i];
    p.p_fg = static_cast<double>(h.prob[i]);
    p.chi_hat = {static_cast<double>(h.chi[3 * i]), static_cast<double>(h.chi[3 * i + 1]),
                 static_cast<double>(h.chi[3 * i + 2])};
    for (std::size_t k = 0; k < F; ++k) p.f_hat.push_back(static_cast<double>(h.props[i * F + k]));
    out.push_back(std::move(p));
  }
  return out;
}

/// Inference on a raw cloud: voxelize, dilate by `radius`, predict.
template <typename T>
std::vector<VoxelPrediction> predict(const SpgModel<T>& model, const PointCloud& cloud, const GridSpec& spec, int radius,
                                     AreaMode mode = AreaMode::kVoxel3d) {
  const auto grid = voxelize(cloud, spec);
  const auto area = generation_area(grid, radius, mode);
  Tape<T> tape;
  auto h = forward(tape, model, grid, cloud, area);
  return to_predictions(h);
}

}  // namespace spg

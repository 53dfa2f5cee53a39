#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "spg/errors.hpp"
#include "spg/prediction.hpp"
#include "spg/supervision.hpp"
#include "spg/tensor.hpp"

namespace spg {

struct LossWeights {
  double alpha = 0.5;          // empty-foreground term
  double beta = 2.0;           // hidden-voxel terms
  double focal_gamma = 2.0;    // focusing parameter
  double focal_balance = 0.25; // class balance for positives
  bool normalized_xyz = true;  // location residuals in voxel units
};

inline constexpr double kProbClamp = 1e-6;

/// Balanced focal loss of one probability against a 0/1 label.
inline double focal_loss(double p, bool y, const LossWeights& w) {
  if (!(p > 0.0 && p < 1.0)) throw InvariantError("focal_loss: probability must lie strictly inside (0, 1)");
  const double pt = y ? p : 1.0 - p;
  const double at = y ? w.focal_balance : 1.0 - w.focal_balance;
  return -at * std::pow(1.0 - pt, w.focal_gamma) * std::log(pt);
}

/// d focal_loss / d p.
inline double focal_loss_grad(double p, bool y, const LossWeights& w) {
  const double pt = y ? p : 1.0 - p;
  const double at = y ? w.focal_balance : 1.0 - w.focal_balance;
  const double q = 1.0 - pt;
  const double mod_grad = w.focal_gamma == 0.0 ? 0.0 : w.focal_gamma * std::pow(q, w.focal_gamma - 1.0);
  const double dpt = -at * (-mod_grad * std::log(pt) + std::pow(q, w.focal_gamma) / pt);
  return y ? dpt : -dpt;
}

inline double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

inline double smooth_l1_grad(double d) {
  if (std::abs(d) < 1.0) return d;
  return d > 0 ? 1.0 : -1.0;
}

inline double clamp_prob(double p) { return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp); }

/// Per-voxel coefficient of each focal term in the classification loss.
/// Non-hidden occupied and empty-background voxels share one normalizer,
/// empty-foreground voxels are scaled by alpha, hidden voxels only by beta.
inline std::vector<double> classification_weights(std::span<const VoxelTarget> targets, const LossWeights& w) {
  std::size_t n_main = 0, n_ef = 0, n_hide = 0;
  for (const auto& t : targets) {
    if (t.hidden) ++n_hide;
    else if (t.category == VoxelCategory::kEmptyForeground) ++n_ef;
    else ++n_main;
  }
  std::vector<double> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    if (t.hidden) out.push_back(w.beta / static_cast<double>(n_hide));
    else if (t.category == VoxelCategory::kEmptyForeground) out.push_back(w.alpha / static_cast<double>(n_ef));
    else out.push_back(1.0 / static_cast<double>(n_main));
  }
  return out;
}

/// Per-voxel coefficient of the smooth-L1 term: visible occupied-foreground
/// voxels with a valid target, and hidden voxels with a valid target (beta).
inline std::vector<double> regression_weights(std::span<const VoxelTarget> targets, const LossWeights& w) {
  std::size_t n_of = 0, n_hf = 0;
  for (const auto& t : targets) {
    if (!t.target.valid) continue;
    if (t.hidden) ++n_hf;
    else ++n_of;
  }
  std::vector<double> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    if (!t.target.valid) out.push_back(0.0);
    else if (t.hidden) out.push_back(w.beta / static_cast<double>(n_hf));
    else out.push_back(1.0 / static_cast<double>(n_of));
  }
  return out;
}

namespace detail {

inline void check_alignment(std::span<const VoxelPrediction> preds, const SupervisionTargets& targets) {
  if (preds.size() != targets.voxels.size()) throw InvariantError("predictions do not cover the generation area");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].voxel != targets.voxels[i].voxel) throw InvariantError("prediction/target voxel order mismatch");
  }
}

/// Residual scale per regression channel: 1/voxel_size for xyz when normalized, 1 otherwise.
inline std::vector<double> residual_scale(const GridSpec& spec, std::size_t prop_count, const LossWeights& w) {
  std::vector<double> s(3 + prop_count, 1.0);
  if (w.normalized_xyz) {
    s[0] = 1.0 / spec.voxel_size.x;
    s[1] = 1.0 / spec.voxel_size.y;
    s[2] = 1.0 / spec.voxel_size.z;
  }
  return s;
}

}  // namespace detail

/// Category-weighted focal loss over the generation area. Probabilities are
/// clamped to [1e-6, 1 - 1e-6] first.
inline double classification_loss(std::span<const VoxelPrediction> preds, const SupervisionTargets& targets,
                                  const LossWeights& w) {
  detail::check_alignment(preds, targets);
  const auto coef = classification_weights(targets.voxels, w);
  double loss = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    loss += coef[i] * focal_loss(clamp_prob(preds[i].p_fg), targets.voxels[i].y_f, w);
  }
  return loss;
}

/// Smooth-L1 regression of [chi, f], summed over channels.
inline double regression_loss(std::span<const VoxelPrediction> preds, const SupervisionTargets& targets,
                              const LossWeights& w) {
  detail::check_alignment(preds, targets);
  const auto coef = regression_weights(targets.voxels, w);
  const std::size_t F = targets.observed.prop_count();
  const auto scale = detail::residual_scale(targets.spec, F, w);
  double loss = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (coef[i] == 0.0) continue;
    const auto& t = targets.voxels[i].target;
    const auto& p = preds[i];
    if (p.f_hat.size() != F || t.f_bar.size() != F) throw InvariantError("property count mismatch");
    double s = smooth_l1((p.chi_hat.x - t.chi_bar.x) * scale[0]) + smooth_l1((p.chi_hat.y - t.chi_bar.y) * scale[1]) +
               smooth_l1((p.chi_hat.z - t.chi_bar.z) * scale[2]);
    for (std::size_t k = 0; k < F; ++k) s += smooth_l1((p.f_hat[k] - t.f_bar[k]) * scale[3 + k]);
    loss += coef[i] * s;
  }
  return loss;
}

namespace ops {

/// sum_i coef[i] * focal(clamp(p[i]), y[i]). Gradient is zero where clamping is active.
template <typename T>
Tensor<T> weighted_focal(Tape<T>& tape, Tensor<T> probs, std::vector<bool> labels, std::vector<double> coef,
                         LossWeights w) {
  detail::check(labels.size() == probs.numel() && coef.size() == probs.numel(), "weighted_focal", "size mismatch");
  auto out = detail::result<T>({1}, probs.requires_grad());
  double acc = 0;
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    if (coef[i] == 0.0) continue;
    acc += coef[i] * focal_loss(clamp_prob(static_cast<double>(probs[i])), labels[i], w);
  }
  out[0] = static_cast<T>(acc);
  if (out.requires_grad()) {
    tape.record([probs, out, labels = std::move(labels), coef = std::move(coef), w]() mutable {
      const double g = out.grad()[0];
      auto gp = probs.grad();
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const double p = static_cast<double>(probs[i]);
        if (coef[i] == 0.0 || p < kProbClamp || p > 1.0 - kProbClamp) continue;
        gp[i] += static_cast<T>(g * coef[i] * focal_loss_grad(p, labels[i], w));
      }
    });
  }
  return out;
}

/// sum_i coef[i] * sum_k smooth_l1((pred[i,k] - target[i,k]) * scale[k]) for pred[n x c].
template <typename T>
Tensor<T> weighted_smooth_l1(Tape<T>& tape, Tensor<T> pred, std::vector<double> target, std::vector<double> scale,
                             std::vector<double> coef) {
  detail::check(pred.rank() == 2 && scale.size() == pred.dim(1) && coef.size() == pred.dim(0) &&
                    target.size() == pred.numel(),
                "weighted_smooth_l1", "size mismatch");
  const std::size_t c = pred.dim(1);
  auto out = detail::result<T>({1}, pred.requires_grad());
  double acc = 0;
  for (std::size_t i = 0; i < pred.dim(0); ++i) {
    if (coef[i] == 0.0) continue;
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += smooth_l1((pred[i * c + k] - target[i * c + k]) * scale[k]);
    acc += coef[i] * s;
  }
  out[0] = static_cast<T>(acc);
  if (out.requires_grad()) {
    tape.record([=]() mutable {
      const double g = out.grad()[0];
      auto gp = pred.grad();
      for (std::size_t i = 0; i < pred.dim(0); ++i) {
        if (coef[i] == 0.0) continue;
        for (std::size_t k = 0; k < c; ++k) {
          const double d = (pred[i * c + k] - target[i * c + k]) * scale[k];
          gp[i * c + k] += static_cast<T>(g * coef[i] * smooth_l1_grad(d) * scale[k]);
        }
      }
    });
  }
  return out;
}

}  // namespace ops
}  // namespace spg

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spg/config.hpp"
#include "spg/io.hpp"
#include "spg/losses.hpp"
#include "spg/metrics.hpp"
#include "spg/network.hpp"
#include "spg/parallel.hpp"
#include "spg/supervision.hpp"

namespace spg {

template <typename T>
struct LossTerms {
  Tensor<T> total;  // [1], differentiable
  double cls = 0;
  double reg = 0;
};

/// L_cls + L_reg of one scene's targets under the current model.
template <typename T>
LossTerms<T> spg_loss(Tape<T>& tape, const SpgModel<T>& model, const SupervisionTargets& targets,
                      const LossWeights& w) {
  const auto observed_grid = voxelize(targets.observed, targets.spec);
  auto head = forward(tape, model, observed_grid, targets.observed, targets.area);
  LossTerms<T> out;
  const std::size_t n = targets.voxels.size();
  if (n == 0) {
    out.total = Tensor<T>::zeros({1});
    return out;
  }
  std::vector<bool> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = targets.voxels[i].y_f;
  auto cls = ops::weighted_focal(tape, head.prob, std::move(labels), classification_weights(targets.voxels, w), w);

  const auto reg_coef = regression_weights(targets.voxels, w);
  const std::size_t F = targets.observed.prop_count();
  const auto scale = detail::residual_scale(targets.spec, F, w);
  std::vector<double> chi_t(3 * n, 0.0), f_t(F * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = targets.voxels[i].target;
    if (!t.valid) continue;
    chi_t[3 * i] = t.chi_bar.x;
    chi_t[3 * i + 1] = t.chi_bar.y;
    chi_t[3 * i + 2] = t.chi_bar.z;
    for (std::size_t k = 0; k < F; ++k) f_t[F * i + k] = t.f_bar[k];
  }
  auto reg = ops::weighted_smooth_l1(tape, head.chi, std::move(chi_t), {scale[0], scale[1], scale[2]}, reg_coef);
  if (F > 0) {
    auto reg_f = ops::weighted_smooth_l1(tape, head.props, std::move(f_t),
                                         std::vector<double>(scale.begin() + 3, scale.end()), reg_coef);
    reg = ops::add(tape, reg, reg_f);
  }
  out.cls = static_cast<double>(cls.item());
  out.reg = static_cast<double>(reg.item());
  out.total = ops::add(tape, cls, reg);
  return out;
}

/// SGD with optional heavy-ball momentum and global-norm gradient clipping.
template <typename T>
class Sgd {
 public:
  explicit Sgd(const OptimizerConfig& cfg) : cfg_(cfg) {}

  void step(SpgModel<T>& model) {
    auto& params = model.parameters();
    if (cfg_.momentum && velocity_.empty()) {
      for (const auto& [name, t] : params) velocity_.emplace_back(name, Tensor<T>::zeros(t.shape()));
    }
    double scale = 1.0;
    if (cfg_.grad_clip > 0) {
      double sq = 0;
      for (auto& [name, t] : params) {
        for (auto g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;
    }
    const T lr = static_cast<T>(cfg_.learning_rate);
    const T mu = static_cast<T>(cfg_.momentum_coef);
    const T gs = static_cast<T>(scale);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& t = params[p].second;
      auto g = t.grad();
      auto d = t.data();
      if (cfg_.momentum) {
        auto v = velocity_[p].second.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          v[i] = mu * v[i] + gs * g[i];
          d[i] -= lr * v[i];
        }
      } else {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * gs * g[i];
      }
    }
  }

  std::vector<std::pair<std::string, Tensor<T>>>& state() { return velocity_; }
  void ensure_state(const SpgModel<T>& model) {
    if (!cfg_.momentum || !velocity_.empty()) return;
    for (const auto& [name, t] : model.parameters()) velocity_.emplace_back(name, Tensor<T>::zeros(t.shape()));
  }

 private:
  OptimizerConfig cfg_;
  std::vector<std::pair<std::string, Tensor<T>>> velocity_;
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0, cls = 0, reg = 0;
};

/// Deterministic single-threaded trainer. Step s draws its batch from
/// Rng(seed).split({kBatch, s}) and hides voxels with seeds from
/// Rng(seed).split({kHide, s, slot}), so a run resumed at step s continues
/// exactly as an uninterrupted one.
template <typename T>
class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::vector<Scene> scenes)
      : cfg_(cfg), scenes_(std::move(scenes)), optimizer_(cfg.optimizer), workers_(worker_count()) {
    cfg_.validate();
    if (scenes_.empty()) throw DataError("training needs at least one scene");
    const std::size_t F = scenes_.front().cloud.prop_count();
    for (const auto& s : scenes_) {
      if (s.cloud.prop_count() != F) throw DataError("training scenes disagree on property count");
    }
    model_ = SpgModel<T>(cfg_.network, static_cast<std::size_t>(cfg_.grid.nz()), F, cfg_.optimizer.seed);
  }

  SpgModel<T>& model() { return model_; }
  const SpgModel<T>& model() const { return model_; }
  std::size_t step_index() const { return step_; }

  SupervisionTargets targets_for(std::size_t step, std::size_t slot, std::size_t scene) const {
    const auto hide_seed = Rng(cfg_.optimizer.seed).split({streams::kHide, step, slot}).next_u64();
    return build_targets(scenes_[scene], cfg_.grid, cfg_.target_options(hide_seed));
  }

  StepRecord step() {
    Rng batch_rng = Rng(cfg_.optimizer.seed).split({streams::kBatch, step_});
    const std::size_t B = cfg_.optimizer.batch_size;
    std::vector<std::size_t> picks(B);
    for (auto& p : picks) p = static_cast<std::size_t>(batch_rng.below(scenes_.size()));
    // target building is pure per slot; the tape stays on this thread
    std::vector<SupervisionTargets> targets(B);
    parallel_for(B, workers_, [&](std::size_t slot) { targets[slot] = targets_for(step_, slot, picks[slot]); });
    Tape<T> tape;
    Tensor<T> total;
    StepRecord rec{step_, 0, 0, 0};
    for (std::size_t slot = 0; slot < B; ++slot) {
      auto terms = spg_loss(tape, model_, targets[slot], cfg_.loss);
      auto scaled = ops::scale(tape, terms.total, static_cast<T>(1.0 / static_cast<double>(B)));
      total = total.defined() ? ops::add(tape, total, scaled) : scaled;
      rec.cls += terms.cls / static_cast<double>(B);
      rec.reg += terms.reg / static_cast<double>(B);
    }
    rec.loss = static_cast<double>(total.item());
    model_.zero_grad();
    tape.backward(total);
    optimizer_.step(model_);
    ++step_;
    return rec;
  }

  std::vector<StepRecord> run(std::size_t until_step, const std::function<void(const StepRecord&)>& on_step = {}) {
    std::vector<StepRecord> log;
    while (step_ < until_step) {
      log.push_back(step());
      if (on_step) on_step(log.back());
    }
    return log;
  }

  io::Checkpoint checkpoint() {
    io::Checkpoint c;
    c.step = step_;
    io::append_tensors(c, model_.parameters());
    if (cfg_.optimizer.momentum) {
      optimizer_.ensure_state(model_);
      io::append_tensors(c, optimizer_.state(), "momentum/");
    }
    return c;
  }

  void restore(const io::Checkpoint& c) {
    io::restore_tensors(c, model_.parameters());
    if (cfg_.optimizer.momentum) {
      optimizer_.ensure_state(model_);
      io::restore_tensors(c, optimizer_.state(), "momentum/");
    }
    step_ = static_cast<std::size_t>(c.step);
  }

 private:
  RunConfig cfg_;
  std::vector<Scene> scenes_;
  SpgModel<T> model_;
  Sgd<T> optimizer_;
  std::size_t workers_;
  std::size_t step_ = 0;
};

/// Model sized for `cfg` with parameters from a checkpoint.
template <typename T>
SpgModel<T> load_model(const RunConfig& cfg, std::size_t prop_count, const io::Checkpoint& c) {
  SpgModel<T> m(cfg.network, static_cast<std::size_t>(cfg.grid.nz()), prop_count, cfg.optimizer.seed);
  io::restore_tensors(c, m.parameters());
  return m;
}

/// (score, label) for every voxel of each scene's generation area, using the
/// full cloud (no hiding) and box-derived labels.
template <typename T>
std::vector<ScoredLabel> score_voxels(const SpgModel<T>& model, std::span<const Scene> scenes, const GridSpec& spec,
                                      int radius, AreaMode mode = AreaMode::kVoxel3d) {
  std::vector<ScoredLabel> out;
  for (const auto& scene : scenes) {
    const auto grid = voxelize(scene.cloud, spec);
    const auto area = generation_area(grid, radius, mode);
    const auto labels = label_voxels(scene, grid, area);
    Tape<T> tape;
    const auto head = forward(tape, model, grid, scene.cloud, area);
    for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({static_cast<double>(head.prob[i]), labels[i].y_f});
  }
  return out;
}

}  // namespace spg

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace spg {

/// Seedable, splittable random stream.
///
/// Engine is std::mt19937_64, whose output sequence is fixed by the standard.
/// Distributions are computed here from raw engine bits rather than through
/// <random> distributions, so streams are bit-identical across standard
/// libraries.
///
/// Child streams are derived with `split(id...)`: the child engine is seeded
/// through std::seed_seq from the parent's root seed words followed by the
/// 32-bit halves of each id. Splitting does not advance the parent. Stream ids
/// used across the library are listed in `streams`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : path_{lo(seed), hi(seed)} { reseed(); }

  Rng split(std::initializer_list<std::uint64_t> ids) const {
    Rng child;
    child.path_ = path_;
    for (auto id : ids) {
      child.path_.push_back(lo(id));
      child.path_.push_back(hi(id));
    }
    child.reseed();
    return child;
  }
  Rng split(std::uint64_t id) const { return split({id}); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo_v, double hi_v) { return lo_v + (hi_v - lo_v) * uniform(); }

  /// Uniform integer in [0, n), n > 0, rejection sampled (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  std::int64_t integer(std::int64_t lo_v, std::int64_t hi_v) {  // inclusive
    return lo_v + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi_v - lo_v) + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  static std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
  static std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

  void reseed() {
    std::seed_seq seq(path_.begin(), path_.end());
    engine_.seed(seq);
  }

  std::vector<std::uint32_t> path_;
  std::mt19937_64 engine_;
};

/// Stream ids. A training run with seed s uses
///   Rng(s).split(kInit)                 parameter initialization
///   Rng(s).split({kBatch, step})        scene sampling for one step
///   Rng(s).split({kHide, step, slot})   Hide-and-Predict for one batch slot
/// Scene synthesis uses Rng(recipe.seed).split({kScene, index}) and
/// degradation of scene i is seeded with Rng(profile.seed).split({kDegrade, i}).next_u64().
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kBatch = 2;
inline constexpr std::uint64_t kHide = 3;
inline constexpr std::uint64_t kScene = 4;
inline constexpr std::uint64_t kDegrade = 5;
inline constexpr std::uint64_t kDrop = 6;
}  // namespace streams

}  // namespace spg

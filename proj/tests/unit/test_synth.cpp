#include <gtest/gtest.h>

#include <set>

#include "common/oracles.hpp"
#include "spg/synth.hpp"

using namespace spg;

namespace {

std::size_t count_in(const PointCloud& c, const OrientedBox& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) n += point_in_box(c.xyz(i), b);
  return n;
}

std::multiset<std::vector<float>> records(const PointCloud& c) {
  std::multiset<std::vector<float>> s;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto r = c.record(i);
    s.emplace(r.begin(), r.end());
  }
  return s;
}

}  // namespace

TEST(Synth, ZeroObjects) {
  SceneRecipe r;
  r.min_objects = r.max_objects = 0;
  const auto s = make_scene(r, 3);
  EXPECT_TRUE(s.boxes.empty());
  EXPECT_GT(s.cloud.size(), 0u);
}

TEST(Synth, Deterministic) {
  SceneRecipe r;
  EXPECT_EQ(make_scene(r, 7), make_scene(r, 7));
  EXPECT_NE(make_scene(r, 7).cloud, make_scene(r, 8).cloud);
  SceneRecipe r2 = r;
  r2.seed = 1;
  EXPECT_NE(make_scene(r, 7).cloud, make_scene(r2, 7).cloud);
}

TEST(Synth, SceneInvariants) {
  SceneRecipe r;
  r.pedestrian_fraction = 0.3;
  for (std::uint64_t i = 0; i < 30; ++i) {
    const auto s = make_scene(r, i);
    ASSERT_GE(static_cast<int>(s.boxes.size()), r.min_objects);
    ASSERT_LE(static_cast<int>(s.boxes.size()), r.max_objects);
    for (std::size_t a = 0; a < s.boxes.size(); ++a) {
      const auto& b = s.boxes[a];
      EXPECT_NO_THROW(b.validate());
      EXPECT_GE(count_in(s.cloud, b), 1u) << "scene " << i << " box " << a;
      EXPECT_NEAR(b.cz - 0.5 * b.height, r.ground_z, 1e-12);
      for (std::size_t c = a + 1; c < s.boxes.size(); ++c) {
        const auto& o = s.boxes[c];
        EXPECT_GT(std::hypot(o.cx - b.cx, o.cy - b.cy),
                  0.5 * std::hypot(b.length, b.width) + 0.5 * std::hypot(o.length, o.width));
      }
    }
    EXPECT_EQ(s.cloud.prop_count(), 1u);
  }
}

TEST(Synth, ForegroundIsSelfConsistent) {
  // every point not placed on an object surface stays outside all boxes
  SceneRecipe r;
  r.surface_density = 1e-9;  // sample_object still emits one return per box
  const auto s = make_scene(r, 2);
  std::size_t fg = 0;
  for (std::size_t i = 0; i < s.cloud.size(); ++i) fg += point_in_any_box(s.cloud.xyz(i), s.boxes);
  EXPECT_EQ(fg, s.boxes.size());
}

TEST(Synth, RejectsBadRecipe) {
  SceneRecipe r;
  r.min_objects = 3;
  r.max_objects = 2;
  EXPECT_THROW(make_scene(r), UsageError);
  r = SceneRecipe{};
  r.min_objects = r.max_objects = 200;
  r.max_retries = 5;
  EXPECT_THROW(make_scene(r), DataError);
}

TEST(Degrade, NoneIsIdentity) {
  const auto s = make_scene(SceneRecipe{}, 1);
  EXPECT_EQ(degrade(s, DegradationProfile::dry()), s);
}

TEST(Degrade, UniformDelegatesToRndDrop) {
  const auto s = make_scene(SceneRecipe{}, 1);
  DegradationProfile p;
  p.mode = DegradationMode::kUniform;
  p.rate = 0.17;
  p.seed = 42;
  const auto d = degrade(s, p);
  EXPECT_EQ(d.cloud, rnd_drop(s.cloud, 0.17, 42));
  EXPECT_EQ(d.boxes, s.boxes);
}

TEST(Degrade, PatchyRemovesSubsetOnly) {
  SceneRecipe r;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto s = make_scene(r, i);
    const auto d = degrade(s, DegradationProfile::rainy(5).for_scene(i));
    EXPECT_EQ(d.boxes, s.boxes);
    EXPECT_LT(d.cloud.size(), s.cloud.size());
    const auto before = records(s.cloud), after = records(d.cloud);
    EXPECT_TRUE(std::includes(before.begin(), before.end(), after.begin(), after.end()));
    EXPECT_EQ(d, degrade(s, DegradationProfile::rainy(5).for_scene(i)));
  }
}

TEST(Degrade, PatchyKeepAllAndDropAll) {
  const auto s = make_scene(SceneRecipe{}, 4);
  auto p = DegradationProfile::rainy(1);
  p.keep_prob = 1.0;
  EXPECT_EQ(degrade(s, p).cloud, s.cloud);
  // a narrow wedge of points lies inside any patch of radius 100
  Scene wedge;
  wedge.cloud = PointCloud(0);
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    wedge.cloud.push_back(static_cast<float>(rng.uniform(10, 11)), static_cast<float>(rng.uniform(-0.5, 0.5)), 0);
  }
  p.keep_prob = 0.0;
  p.patch_count = 1;
  p.patch_radius = 100;
  EXPECT_EQ(degrade(wedge, p).cloud.size(), 0u);
}

TEST(Degrade, PatchyRecount) {
  // dense object near the sensor; large patches drop a measurable share of its points
  SceneRecipe r;
  r.surface_density = 400;
  auto p = DegradationProfile::rainy(9);
  p.patch_count = 40;
  p.patch_radius = 4;
  p.keep_prob = 0.0;
  std::size_t before = 0, after = 0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto s = make_scene(r, i);
    const auto d = degrade(s, p.for_scene(i));
    // recount oracle: the removed multiset accounts for every per-box loss
    const auto all = records(s.cloud), kept = records(d.cloud);
    std::vector<std::vector<float>> removed;
    std::set_difference(all.begin(), all.end(), kept.begin(), kept.end(), std::back_inserter(removed));
    EXPECT_EQ(removed.size(), s.cloud.size() - d.cloud.size());
    for (const auto& b : s.boxes) {
      const std::size_t nb = count_in(s.cloud, b), na = count_in(d.cloud, b);
      std::size_t lost = 0;
      for (const auto& rec : removed) lost += point_in_box({rec[0], rec[1], rec[2]}, b);
      EXPECT_EQ(nb - na, lost);
      before += nb;
      after += na;
    }
  }
  EXPECT_LT(after, before);
}

TEST(Degrade, PerSceneSeedsDiffer) {
  const auto p = DegradationProfile::rainy(3);
  EXPECT_NE(p.for_scene(0).seed, p.for_scene(1).seed);
  EXPECT_EQ(p.for_scene(2).seed, p.for_scene(2).seed);
  EXPECT_EQ(p.for_scene(2).patch_count, p.patch_count);
}

TEST(Degrade, RejectsBadProfile) {
  auto p = DegradationProfile::rainy();
  p.keep_prob = 2;
  EXPECT_THROW(degrade(make_scene(SceneRecipe{}), p), UsageError);
}

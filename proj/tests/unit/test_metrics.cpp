#include <gtest/gtest.h>

#include "common/oracles.hpp"
#include "spg/metrics.hpp"

using namespace spg;

namespace {

std::vector<ScoredLabel> random_pairs(Rng& rng, std::size_t n) {
  std::vector<ScoredLabel> v;
  const double base_rate = rng.uniform(0.05, 0.6);
  const bool coarse = rng.bernoulli(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = rng.bernoulli(base_rate);
    double s = std::clamp(rng.uniform() * 0.7 + (pos ? 0.3 : 0.0), 0.0, 1.0);
    if (coarse) s = std::round(s * 10) / 10;
    v.push_back({s, pos});
  }
  return v;
}

}  // namespace

TEST(Metrics, PerfectPredictor) {
  std::vector<ScoredLabel> p{{0.9, true}, {0.8, true}, {0.2, false}, {0.1, false}};
  const auto r = classifier_metrics(p);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.ap, 1.0);
}

TEST(Metrics, ConstantScoreBelowThreshold) {
  std::vector<ScoredLabel> p{{0.4, true}, {0.4, false}, {0.4, false}, {0.4, true}};
  const auto r = classifier_metrics(p);
  EXPECT_TRUE(r.no_positive_predictions);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.accuracy, 0.5);
  // a single operating point at recall 1 with precision 1/2
  EXPECT_EQ(r.ap, 0.5);
}

TEST(Metrics, NoPositives) {
  std::vector<ScoredLabel> p{{0.9, false}, {0.1, false}};
  const auto r = classifier_metrics(p);
  EXPECT_TRUE(r.no_positive_labels);
  EXPECT_EQ(r.ap, 0.0);
  EXPECT_EQ(r.false_pos, 1u);
  EXPECT_EQ(r.true_neg, 1u);
}

TEST(Metrics, DecisionThresholdIsStrict) {
  std::vector<ScoredLabel> p{{0.5, true}, {0.51, true}};
  const auto r = classifier_metrics(p);
  EXPECT_EQ(r.true_pos, 1u);
  EXPECT_EQ(r.false_neg, 1u);
}

TEST(Metrics, HandCase) {
  // ranked: + - + -   curve: (0.5, 1), (0.5, 0.5), (1, 2/3), (1, 0.5)
  std::vector<ScoredLabel> p{{0.9, true}, {0.8, false}, {0.7, true}, {0.6, false}};
  const double expect = (20 * 1.0 + 20 * (2.0 / 3.0)) / 40;
  EXPECT_NEAR(average_precision(p, 40), expect, 1e-15);
  EXPECT_NEAR(average_precision(p, 40), oracle::ref_average_precision(p, 40), 1e-15);
}

TEST(Metrics, MatchesExhaustiveOracle) {
  Rng rng(11);
  for (int t = 0; t < 300; ++t) {
    const auto p = random_pairs(rng, static_cast<std::size_t>(rng.integer(1, 300)));
    ASSERT_NEAR(average_precision(p, 40), oracle::ref_average_precision(p, 40), 1e-9) << "trial " << t;
  }
}

TEST(Metrics, MonotoneTransformInvariance) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    auto p = random_pairs(rng, 200);
    auto q = p;
    for (auto& s : q) s.score = std::exp(3 * s.score) - 7;  // strictly increasing
    ASSERT_EQ(average_precision(p, 40), average_precision(q, 40));
  }
}

TEST(Metrics, PermutationAndDuplicationInvariance) {
  Rng rng(13);
  auto p = random_pairs(rng, 150);
  auto shuffled = p;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(5));
  EXPECT_EQ(average_precision(p, 40), average_precision(shuffled, 40));
  auto doubled = p;
  doubled.insert(doubled.end(), p.begin(), p.end());
  EXPECT_NEAR(average_precision(p, 40), average_precision(doubled, 40), 1e-12);
}

TEST(Metrics, CountsTally) {
  Rng rng(14);
  const auto p = random_pairs(rng, 500);
  const auto r = classifier_metrics(p);
  EXPECT_EQ(r.true_pos + r.false_pos + r.true_neg + r.false_neg, 500u);
  std::size_t pos = 0;
  for (const auto& s : p) pos += s.positive;
  EXPECT_EQ(r.true_pos + r.false_neg, pos);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(classifier_metrics({}), DataError);
  std::vector<ScoredLabel> p{{0.5, true}};
  EXPECT_THROW(average_precision(p, 1), UsageError);
}

TEST(RangeBins, CountsPointsPerBox) {
  Scene s;
  s.cloud = PointCloud(0);
  OrientedBox near{3, 0, 0, 2, 2, 2, 0, 1};
  OrientedBox far{0, 12, 0, 2, 2, 2, 0, 1};
  s.boxes = {near, far};
  for (int i = 0; i < 4; ++i) s.cloud.push_back(3.1f, 0.1f * static_cast<float>(i), 0);
  s.cloud.push_back(0, 12, 0);
  s.cloud.push_back(20, 20, 0);  // in no box
  const std::vector<double> edges{0, 5, 10, 15};
  const auto bins = points_per_object_by_range(std::span<const Scene>(&s, 1), edges);
  ASSERT_EQ(bins.size(), 3u);
  EXPECT_EQ(bins[0].boxes, 1u);
  EXPECT_EQ(bins[0].mean_points, 4.0);
  EXPECT_TRUE(bins[1].empty);
  EXPECT_EQ(bins[2].mean_points, 1.0);
}

TEST(RangeBins, BoundariesAndOutOfRange) {
  Scene s;
  s.cloud = PointCloud(0);
  s.boxes = {OrientedBox{5, 0, 0, 1, 1, 1, 0, 1}, OrientedBox{50, 0, 0, 1, 1, 1, 0, 1}};
  const std::vector<double> edges{0, 5, 10};
  const auto bins = points_per_object_by_range(std::span<const Scene>(&s, 1), edges);
  EXPECT_EQ(bins[0].boxes, 0u);  // distance 5 falls in [5, 10)
  EXPECT_EQ(bins[1].boxes, 1u);
  const std::vector<double> bad{0, 5, 5};
  EXPECT_THROW(points_per_object_by_range(std::span<const Scene>(&s, 1), bad), UsageError);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "spg/errors.hpp"
#include "spg/geometry.hpp"

namespace spg {

struct ScoredLabel {
  double score = 0;
  bool positive = false;
};

struct ClassifierReport {
  std::size_t count = 0;
  std::size_t true_pos = 0, false_pos = 0, true_neg = 0, false_neg = 0;
  double accuracy = 0, precision = 0, recall = 0;
  double ap = 0;
  int recall_thresholds = 40;
  bool no_positive_predictions = false;  // precision reported as 0
  bool no_positive_labels = false;       // recall and AP reported as 0
};

inline constexpr double kDecisionThreshold = 0.5;

/// One point of the precision/recall curve.
struct PrPoint {
  double recall = 0, precision = 0;
};

/// Operating points obtained by thresholding at every distinct score
/// (predict positive when score >= threshold), highest threshold first.
inline std::vector<PrPoint> pr_curve(std::span<const ScoredLabel> pairs) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs[a].score > pairs[b].score; });
  std::size_t positives = 0;
  for (const auto& p : pairs) positives += p.positive;
  std::vector<PrPoint> curve;
  if (positives == 0) return curve;
  std::size_t tp = 0, seen = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    tp += pairs[order[k]].positive;
    ++seen;
    // only at the end of a group of tied scores
    if (k + 1 < order.size() && pairs[order[k + 1]].score == pairs[order[k]].score) continue;
    curve.push_back({static_cast<double>(tp) / static_cast<double>(positives),
                     static_cast<double>(tp) / static_cast<double>(seen)});
  }
  return curve;
}

/// Interpolated AP: mean over recall levels j/n (j = 1..n) of the best
/// precision reached at recall >= level.
inline double average_precision(std::span<const ScoredLabel> pairs, int n_recall) {
  if (n_recall < 2) throw UsageError("need at least two recall thresholds");
  const auto curve = pr_curve(pairs);
  if (curve.empty()) return 0.0;
  // suffix max of precision over the curve (recall is non-decreasing along it)
  std::vector<double> best(curve.size());
  double run = 0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    run = std::max(run, curve[i].precision);
    best[i] = run;
  }
  double sum = 0;
  std::size_t idx = 0;
  for (int j = 1; j <= n_recall; ++j) {
    const double level = static_cast<double>(j) / static_cast<double>(n_recall);
    while (idx < curve.size() && curve[idx].recall < level) ++idx;
    if (idx < curve.size()) sum += best[idx];
  }
  return sum / static_cast<double>(n_recall);
}

/// Accuracy/precision/recall at score > 0.5 and interpolated AP.
inline ClassifierReport classifier_metrics(std::span<const ScoredLabel> pairs, int n_recall = 40) {
  if (pairs.empty()) throw DataError("classifier_metrics needs at least one scored label");
  ClassifierReport r;
  r.count = pairs.size();
  r.recall_thresholds = n_recall;
  for (const auto& p : pairs) {
    const bool pred = p.score > kDecisionThreshold;
    if (pred && p.positive) ++r.true_pos;
    else if (pred) ++r.false_pos;
    else if (p.positive) ++r.false_neg;
    else ++r.true_neg;
  }
  const auto n = static_cast<double>(r.count);
  r.accuracy = static_cast<double>(r.true_pos + r.true_neg) / n;
  r.no_positive_predictions = r.true_pos + r.false_pos == 0;
  r.no_positive_labels = r.true_pos + r.false_neg == 0;
  r.precision = r.no_positive_predictions ? 0.0 : static_cast<double>(r.true_pos) / static_cast<double>(r.true_pos + r.false_pos);
  r.recall = r.no_positive_labels ? 0.0 : static_cast<double>(r.true_pos) / static_cast<double>(r.true_pos + r.false_neg);
  r.ap = average_precision(pairs, n_recall);
  return r;
}

struct RangeBin {
  double lo = 0, hi = 0;
  std::size_t boxes = 0;
  double mean_points = 0;
  bool empty = true;
};

/// Mean number of contained points per box, binned by the Euclidean distance
/// from the sensor origin to the box center. Bins are [edge_i, edge_i+1).
inline std::vector<RangeBin> points_per_object_by_range(std::span<const Scene> scenes, std::span<const double> edges) {
  if (edges.size() < 2) throw UsageError("need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw UsageError("bin edges must be strictly increasing");
  }
  std::vector<RangeBin> bins(edges.size() - 1);
  std::vector<double> totals(bins.size(), 0.0);
  for (std::size_t i = 0; i < bins.size(); ++i) bins[i] = {edges[i], edges[i + 1], 0, 0, true};
  for (const auto& scene : scenes) {
    for (const auto& b : scene.boxes) {
      const double d = std::sqrt(b.cx * b.cx + b.cy * b.cy + b.cz * b.cz);
      auto it = std::upper_bound(edges.begin(), edges.end(), d);
      if (it == edges.begin() || it == edges.end()) continue;
      const auto bin = static_cast<std::size_t>(it - edges.begin()) - 1;
      std::size_t count = 0;
      for (std::size_t i = 0; i < scene.cloud.size(); ++i) count += point_in_box(scene.cloud.xyz(i), b);
      bins[bin].boxes += 1;
      totals[bin] += static_cast<double>(count);
    }
  }
  for (std::size_t i = 0; i < bins.size(); ++i) {
    bins[i].empty = bins[i].boxes == 0;
    bins[i].mean_points = bins[i].empty ? 0.0 : totals[i] / static_cast<double>(bins[i].boxes);
  }
  return bins;
}

}  // namespace spg

#pragma once

#include <span>
#include <vector>

#include "treeslam/geometry.hpp"
#include "treeslam/tree_map.hpp"

namespace treeslam {

struct MapMatch {
  int pred = 0;  // index into the predicted map
  int gt = 0;    // index into the ground-truth map
  double distance = 0.0;
};

struct MatchResult {
  std::vector<MapMatch> matches;   // ascending pred index
  std::vector<int> false_positives;
  std::vector<int> false_negatives;
};

struct EvalReport {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_tp_error = 0.0;
  double pct_within_half_pd = 0.0;
  double gate = 0.0;
};

/// Min-cost Euclidean matching; optimal pairs at distance >= gate are split
/// into one false positive and one false negative.
MatchResult match_maps(const TreeMap& pred, const TreeMap& gt, double gate);

/// Scores `pred` at `gate`. `pct_within_half_pd` is the recall at
/// `planting_distance / 2` (defaults to the gate when PD is unset).
EvalReport evaluate(const TreeMap& pred, const TreeMap& gt, double gate,
                    double planting_distance = 0.0);

/// One report per gate; gates must be ascending.
std::vector<EvalReport> sweep_thresholds(const TreeMap& pred, const TreeMap& gt,
                                         std::span<const double> gates,
                                         double planting_distance = 0.0);

/// DBSCAN over every accumulated detection, one tree per cluster centroid.
TreeMap baseline_map(std::span<const Point2> detections, double eps = 0.5, int min_samples = 5);

}  // namespace treeslam

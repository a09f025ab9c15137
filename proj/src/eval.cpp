#include "treeslam/eval.hpp"

#include <Eigen/Core>
#include <algorithm>

#include "treeslam/error.hpp"
#include "treeslam/hungarian.hpp"
#include "treeslam/perception.hpp"

namespace treeslam {

MatchResult match_maps(const TreeMap& pred, const TreeMap& gt, double gate) {
  if (!(gate > 0.0)) throw Error("evaluation gate must be positive");
  const auto np = static_cast<int>(pred.size());
  const auto ng = static_cast<int>(gt.size());
  MatchResult out;
  std::vector<bool> pred_used(np, false), gt_used(ng, false);
  if (np > 0 && ng > 0) {
    Eigen::MatrixXd cost(np, ng);
    for (int i = 0; i < np; ++i) {
      for (int j = 0; j < ng; ++j) cost(i, j) = distance(pred.trees[i].position, gt.trees[j].position);
    }
    for (const auto& [i, j] : hungarian(cost).pairs) {
      if (cost(i, j) >= gate) continue;
      out.matches.push_back({i, j, cost(i, j)});
      pred_used[i] = true;
      gt_used[j] = true;
    }
  }
  for (int i = 0; i < np; ++i) {
    if (!pred_used[i]) out.false_positives.push_back(i);
  }
  for (int j = 0; j < ng; ++j) {
    if (!gt_used[j]) out.false_negatives.push_back(j);
  }
  return out;
}

namespace {

EvalReport score(const MatchResult& m, double gate) {
  EvalReport r;
  r.gate = gate;
  r.tp = static_cast<int>(m.matches.size());
  r.fp = static_cast<int>(m.false_positives.size());
  r.fn = static_cast<int>(m.false_negatives.size());
  r.precision = r.tp + r.fp > 0 ? double(r.tp) / (r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn > 0 ? double(r.tp) / (r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  double sum = 0.0;
  for (const auto& mm : m.matches) sum += mm.distance;
  r.mean_tp_error = r.tp > 0 ? sum / r.tp : 0.0;
  return r;
}

}  // namespace

EvalReport evaluate(const TreeMap& pred, const TreeMap& gt, double gate, double planting_distance) {
  EvalReport r = score(match_maps(pred, gt, gate), gate);
  const double half_pd = planting_distance > 0.0 ? 0.5 * planting_distance : gate;
  r.pct_within_half_pd = half_pd == gate ? r.recall : score(match_maps(pred, gt, half_pd), half_pd).recall;
  return r;
}

std::vector<EvalReport> sweep_thresholds(const TreeMap& pred, const TreeMap& gt,
                                         std::span<const double> gates, double planting_distance) {
  if (!std::is_sorted(gates.begin(), gates.end())) throw Error("sweep gates must be ascending");
  std::vector<EvalReport> out;
  out.reserve(gates.size());
  for (double g : gates) out.push_back(evaluate(pred, gt, g, planting_distance));
  return out;
}

TreeMap baseline_map(std::span<const Point2> detections, double eps, int min_samples) {
  const std::vector<int> labels = dbscan(detections, eps, min_samples);
  int n_clusters = 0;
  for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
  std::vector<Point2> sum(n_clusters);
  std::vector<int> count(n_clusters, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoise) continue;
    sum[labels[i]] = sum[labels[i]] + detections[i];
    ++count[labels[i]];
  }
  TreeMap map;
  map.frame = "world";
  for (int c = 0; c < n_clusters; ++c) {
    map.trees.push_back({c, (1.0 / count[c]) * sum[c]});
  }
  return map;
}

}  // namespace treeslam

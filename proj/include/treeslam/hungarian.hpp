#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

namespace treeslam {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), ascending by row
  double total_cost = 0.0;
};

/// Minimum-cost assignment of size min(rows, cols) (shortest augmenting
/// path Hungarian method, O(n^2 m)). Ties resolve to the lowest column
/// index during the scan, so results are deterministic.
/// Throws treeslam::Error on non-finite costs.
Assignment hungarian(const Eigen::MatrixXd& cost);

/// Assignment restricted to pairs with cost <= `max_cost`: the largest
/// admissible matching, cheapest among those.
std::vector<std::pair<int, int>> gated_assignment(const Eigen::MatrixXd& cost, double max_cost);

}  // namespace treeslam

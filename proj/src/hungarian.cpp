#include "treeslam/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "treeslam/error.hpp"

namespace treeslam {

namespace {

// Rows <= cols. Returns the column assigned to each row.
std::vector<int> solve_wide(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  }
  return col_of_row;
}

}  // namespace

Assignment hungarian(const Eigen::MatrixXd& cost) {
  Assignment out;
  if (cost.size() == 0) return out;
  if (!cost.allFinite()) throw Error("hungarian: cost matrix must be finite");

  if (cost.rows() <= cost.cols()) {
    const auto cols = solve_wide(cost);
    for (int r = 0; r < static_cast<int>(cols.size()); ++r) out.pairs.emplace_back(r, cols[r]);
  } else {
    const Eigen::MatrixXd t = cost.transpose();
    const auto rows = solve_wide(t);
    for (int c = 0; c < static_cast<int>(rows.size()); ++c) out.pairs.emplace_back(rows[c], c);
    std::sort(out.pairs.begin(), out.pairs.end());
  }
  for (const auto& [r, c] : out.pairs) out.total_cost += cost(r, c);
  return out;
}

std::vector<std::pair<int, int>> gated_assignment(const Eigen::MatrixXd& cost, double max_cost) {
  if (!(max_cost >= 0.0) || !std::isfinite(max_cost)) throw Error("gated_assignment: gate must be finite and >= 0");
  if (cost.size() == 0) return {};
  if (!cost.allFinite()) throw Error("hungarian: cost matrix must be finite");
  // One forbidden pair costs more than any set of admissible ones, so the
  // solver maximizes the number of admissible pairs first.
  const double n = static_cast<double>(std::min(cost.rows(), cost.cols()));
  const double forbidden = (max_cost + 1.0) * (n + 1.0);
  const Eigen::MatrixXd gated = (cost.array() <= max_cost).select(cost, forbidden);
  std::vector<std::pair<int, int>> kept;
  for (const auto& rc : hungarian(gated).pairs) {
    if (cost(rc.first, rc.second) <= max_cost) kept.push_back(rc);
  }
  return kept;
}

}  // namespace treeslam

#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <compare>
#include <map>
#include <optional>
#include <vector>

#include "treeslam/geometry.hpp"

namespace treeslam {

enum class VariableKind { kPose, kLandmark };

struct VariableKey {
  VariableKind kind = VariableKind::kPose;
  int index = 0;
  friend auto operator<=>(const VariableKey&, const VariableKey&) = default;
};

inline VariableKey pose_key(int i) { return {VariableKind::kPose, i}; }
inline VariableKey landmark_key(int j) { return {VariableKind::kLandmark, j}; }

enum class FactorKind { kPrior, kOdometry, kGps, kRangeBearing, kInterDistance };

const char* to_string(FactorKind kind);

/// Measurement constraint. Residuals follow the `measurement - prediction`
/// convention (angles wrapped) and are whitened by `sqrt_information`,
/// the inverse of the lower Cholesky factor of `covariance`.
struct Factor {
  FactorKind kind = FactorKind::kPrior;
  std::vector<VariableKey> keys;
  Eigen::VectorXd measurement;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd sqrt_information;

  /// Validates arity, dimensions and positive definiteness; fills
  /// `sqrt_information`. Throws treeslam::Error on violation.
  static Factor make(FactorKind kind, std::vector<VariableKey> keys, Eigen::VectorXd measurement,
                     Eigen::MatrixXd covariance);
};

struct Values {
  std::vector<Pose2> poses;          // index == pose key index
  std::map<int, Point2> landmarks;   // landmark key index -> position

  bool has(const VariableKey& key) const;
  const Pose2& pose(int i) const;
  const Point2& landmark(int j) const;
};

/// Whitened residual of `f` at `v`. Throws MissingKeyError or
/// DegenerateGeometryError.
Eigen::VectorXd factor_residual(const Factor& f, const Values& v);

/// Whitened residual Jacobians, one block per connected key (columns:
/// x, y, theta for poses; x, y for landmarks).
std::vector<Eigen::MatrixXd> factor_jacobian(const Factor& f, const Values& v);

/// Weighted sum of squared residuals over `factors` (no 1/2 factor).
double total_cost(const std::vector<Factor>& factors, const Values& v);

enum class OptimizeMode { kBatch, kIncremental };

struct SolverOptions {
  int max_iterations = 100;
  double relative_tolerance = 1e-9;
  double absolute_tolerance = 1e-20;
  double initial_lambda = 1e-5;
  double max_lambda = 1e12;
  std::optional<double> huber_threshold;  // whitened-residual norm; none = plain least squares
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  std::vector<double> cost_history;  // accepted costs, starting with initial
  Values estimates;
};

struct NoiseDefaults {
  Eigen::Vector3d odom_sigma{0.02, 0.02, 0.01};
  double gps_sigma = 0.30;
  double range_sigma = 0.10;
  double bearing_sigma = 0.05;
  double inter_distance_sigma = 0.05;
};

/// Pose/landmark factor graph with an in-place Levenberg-Marquardt solver
/// on sparse normal equations.
class FactorGraph {
 public:
  FactorGraph() = default;

  /// Creates pose 0 with a gauge-fixing prior.
  VariableKey initialize(const Pose2& prior_mean, const Eigen::Matrix3d& prior_cov);

  /// Appends a pose initialised at compose(latest estimate, delta) plus the
  /// odometry factor linking it to its predecessor.
  VariableKey add_pose(const Pose2Delta& delta, const Eigen::Matrix3d& cov);

  /// Position-only (2-vector) or full-pose (3-vector) absolute fix.
  void add_gps(const VariableKey& pose, const Eigen::VectorXd& z, const Eigen::MatrixXd& cov);

  /// Range-bearing factor; a new landmark id is initialised at pose + (r, phi).
  void add_observation(const VariableKey& pose, int landmark, const RangeBearing& z,
                       double sigma_range, double sigma_bearing);

  void add_inter_distance(int landmark_i, int landmark_j, double delta, double sigma);

  /// Generic insertion for tests and tooling; keys must already exist.
  void add_factor(Factor f);

  /// BATCH restarts from the stored initial values; INCREMENTAL warm-starts
  /// from the current estimates. Estimates are updated in place.
  SolveReport optimize(OptimizeMode mode, const SolverOptions& options = {});

  double cost() const { return total_cost(factors_, values_); }

  const Values& estimates() const { return values_; }
  const Values& initial_values() const { return initial_; }
  const std::vector<Factor>& factors() const { return factors_; }
  int num_poses() const { return static_cast<int>(values_.poses.size()); }
  bool has_landmark(int j) const { return values_.landmarks.count(j) != 0; }

 private:
  struct Block {
    VariableKey key;
    int dim = 0;
    int offset = 0;
    std::vector<int> lower;  // sorted neighbor blocks with larger index
  };

  int add_block(const VariableKey& key);
  int block_of(const VariableKey& key) const;
  void link_blocks(const std::vector<int>& blocks);
  void rebuild_pattern();
  void accumulate(const Values& v, const SolverOptions& options, Eigen::VectorXd& gradient,
                  double& cost);
  Values retract(const Values& v, const Eigen::VectorXd& delta) const;
  double robust_cost(const Values& v, const SolverOptions& options) const;

  Values values_;
  Values initial_;
  std::vector<Factor> factors_;
  std::vector<std::vector<int>> factor_blocks_;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>> sqrt_info_;
  std::vector<Block> blocks_;
  std::vector<int> pose_block_;
  std::map<int, int> landmark_block_;

  // Lower-triangular normal-equation pattern and per-factor value slots.
  bool pattern_dirty_ = true;
  int dim_ = 0;
  Eigen::SparseMatrix<double> hessian_;
  std::vector<std::vector<int>> factor_slots_;
  std::vector<int> diagonal_slots_;
};

}  // namespace treeslam

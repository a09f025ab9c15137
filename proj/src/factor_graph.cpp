#include "treeslam/factor_graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <string>

#include "treeslam/error.hpp"

namespace treeslam {

namespace {

int key_dim(const VariableKey& k) { return k.kind == VariableKind::kPose ? 3 : 2; }

int expected_arity(FactorKind kind) {
  return (kind == FactorKind::kPrior || kind == FactorKind::kGps) ? 1 : 2;
}

// Small matrices with a compile-time capacity of 3 so linearization never
// touches the heap.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

// Unwhitened residual and Jacobians (measurement - prediction).
struct Linearized {
  Vec r;
  Mat blocks[2];
  int n_blocks = 0;
};

void evaluate(const Factor& f, const Values& v, bool with_jacobian, Linearized& out) {
  const Eigen::VectorXd& z = f.measurement;
  out.n_blocks = with_jacobian ? static_cast<int>(f.keys.size()) : 0;
  switch (f.kind) {
    case FactorKind::kPrior: {
      const Pose2& p = v.pose(f.keys[0].index);
      out.r = Eigen::Vector3d(z(0) - p.x, z(1) - p.y, normalize_angle(z(2) - p.theta));
      if (with_jacobian) out.blocks[0] = -Eigen::Matrix3d::Identity();
      break;
    }
    case FactorKind::kGps: {
      const Pose2& p = v.pose(f.keys[0].index);
      const int m = static_cast<int>(z.size());
      out.r.resize(m);
      out.r(0) = z(0) - p.x;
      out.r(1) = z(1) - p.y;
      if (m == 3) out.r(2) = normalize_angle(z(2) - p.theta);
      if (with_jacobian) out.blocks[0] = -Mat::Identity(m, 3);
      break;
    }
    case FactorKind::kOdometry: {
      const Pose2& a = v.pose(f.keys[0].index);
      const Pose2& b = v.pose(f.keys[1].index);
      const Pose2Delta h = pose_between(a, b);
      out.r = Eigen::Vector3d(z(0) - h.dx, z(1) - h.dy, normalize_angle(z(2) - h.dtheta));
      if (with_jacobian) {
        const double c = std::cos(a.theta);
        const double s = std::sin(a.theta);
        Eigen::Matrix3d ha;
        ha << -c, -s, h.dy,
               s, -c, -h.dx,
               0, 0, -1;
        Eigen::Matrix3d hb;
        hb << c, s, 0,
             -s, c, 0,
              0, 0, 1;
        out.blocks[0] = -ha;
        out.blocks[1] = -hb;
      }
      break;
    }
    case FactorKind::kRangeBearing: {
      const Pose2& p = v.pose(f.keys[0].index);
      const Point2& l = v.landmark(f.keys[1].index);
      const RangeBearing h = range_bearing(p, l);
      out.r = Eigen::Vector2d(z(0) - h.range, normalize_angle(z(1) - h.bearing));
      if (with_jacobian) {
        const double dx = l.x - p.x;
        const double dy = l.y - p.y;
        const double q = dx * dx + dy * dy;
        const double rho = h.range;
        Eigen::Matrix<double, 2, 3> hp;
        hp << -dx / rho, -dy / rho, 0.0,
               dy / q, -dx / q, -1.0;
        Eigen::Matrix2d hl;
        hl << dx / rho, dy / rho,
             -dy / q, dx / q;
        out.blocks[0] = -hp;
        out.blocks[1] = -hl;
      }
      break;
    }
    case FactorKind::kInterDistance: {
      const Point2& li = v.landmark(f.keys[0].index);
      const Point2& lj = v.landmark(f.keys[1].index);
      const double ex = li.x - lj.x;
      const double ey = li.y - lj.y;
      const double d = std::hypot(ex, ey);
      if (!(d > 1e-12)) throw DegenerateGeometryError("inter-distance factor with coincident landmarks");
      out.r = Eigen::Matrix<double, 1, 1>(z(0) - d);
      if (with_jacobian) {
        Eigen::Matrix<double, 1, 2> gi;
        gi << ex / d, ey / d;
        out.blocks[0] = -gi;
        out.blocks[1] = gi;
      }
      break;
    }
  }
}

Vec whitened_residual(const Factor& f, const Values& v) {
  Linearized lin;
  evaluate(f, v, false, lin);
  const Mat w = f.sqrt_information;
  return w * lin.r;
}

}  // namespace

const char* to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::kPrior: return "PRIOR";
    case FactorKind::kOdometry: return "ODOMETRY";
    case FactorKind::kGps: return "GPS";
    case FactorKind::kRangeBearing: return "RANGE_BEARING";
    case FactorKind::kInterDistance: return "INTER_DISTANCE";
  }
  return "?";
}

Factor Factor::make(FactorKind kind, std::vector<VariableKey> keys, Eigen::VectorXd measurement,
                    Eigen::MatrixXd covariance) {
  if (static_cast<int>(keys.size()) != expected_arity(kind)) {
    throw Error(std::string("wrong arity for ") + to_string(kind) + " factor");
  }
  int dim = 0;
  VariableKind want0 = VariableKind::kPose;
  VariableKind want1 = VariableKind::kPose;
  switch (kind) {
    case FactorKind::kPrior: dim = 3; break;
    case FactorKind::kGps: dim = static_cast<int>(measurement.size()); break;
    case FactorKind::kOdometry: dim = 3; break;
    case FactorKind::kRangeBearing: dim = 2; want1 = VariableKind::kLandmark; break;
    case FactorKind::kInterDistance:
      dim = 1;
      want0 = want1 = VariableKind::kLandmark;
      break;
  }
  if (kind == FactorKind::kGps && dim != 2 && dim != 3) throw Error("GPS measurement must be 2- or 3-dimensional");
  if (keys[0].kind != want0 || (keys.size() > 1 && keys[1].kind != want1)) {
    throw Error(std::string("wrong variable kinds for ") + to_string(kind) + " factor");
  }
  if (keys.size() == 2 && keys[0] == keys[1]) throw Error("binary factor connects a variable to itself");
  if (measurement.size() != dim || covariance.rows() != dim || covariance.cols() != dim) {
    throw Error(std::string("dimension mismatch for ") + to_string(kind) + " factor");
  }
  if (!measurement.allFinite() || !covariance.allFinite()) throw Error("non-finite factor data");
  if (!covariance.isApprox(covariance.transpose(), 1e-12)) throw Error("covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw Error("covariance must be positive definite");

  Factor f;
  f.kind = kind;
  f.keys = std::move(keys);
  f.measurement = std::move(measurement);
  f.covariance = std::move(covariance);
  const Eigen::MatrixXd lower = llt.matrixL();
  f.sqrt_information = lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(dim, dim));
  return f;
}

bool Values::has(const VariableKey& key) const {
  if (key.kind == VariableKind::kPose) return key.index >= 0 && key.index < static_cast<int>(poses.size());
  return landmarks.count(key.index) != 0;
}

const Pose2& Values::pose(int i) const {
  if (i < 0 || i >= static_cast<int>(poses.size())) throw MissingKeyError("missing pose x" + std::to_string(i));
  return poses[i];
}

const Point2& Values::landmark(int j) const {
  auto it = landmarks.find(j);
  if (it == landmarks.end()) throw MissingKeyError("missing landmark l" + std::to_string(j));
  return it->second;
}

Eigen::VectorXd factor_residual(const Factor& f, const Values& v) { return whitened_residual(f, v); }

std::vector<Eigen::MatrixXd> factor_jacobian(const Factor& f, const Values& v) {
  Linearized lin;
  evaluate(f, v, true, lin);
  std::vector<Eigen::MatrixXd> out;
  for (int b = 0; b < lin.n_blocks; ++b) out.push_back(f.sqrt_information * lin.blocks[b]);
  return out;
}

double total_cost(const std::vector<Factor>& factors, const Values& v) {
  double c = 0.0;
  for (const auto& f : factors) c += whitened_residual(f, v).squaredNorm();
  return c;
}

// ---------------------------------------------------------------------------
// Graph construction

int FactorGraph::add_block(const VariableKey& key) {
  Block b;
  b.key = key;
  b.dim = key_dim(key);
  b.offset = blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().dim;
  blocks_.push_back(b);
  pattern_dirty_ = true;
  return static_cast<int>(blocks_.size()) - 1;
}

int FactorGraph::block_of(const VariableKey& key) const {
  if (key.kind == VariableKind::kPose) {
    if (key.index < 0 || key.index >= static_cast<int>(pose_block_.size())) {
      throw MissingKeyError("unknown pose x" + std::to_string(key.index));
    }
    return pose_block_[key.index];
  }
  auto it = landmark_block_.find(key.index);
  if (it == landmark_block_.end()) throw MissingKeyError("unknown landmark l" + std::to_string(key.index));
  return it->second;
}

void FactorGraph::link_blocks(const std::vector<int>& blocks) {
  for (int a : blocks) {
    for (int b : blocks) {
      if (b <= a) continue;
      auto& lower = blocks_[a].lower;
      auto it = std::lower_bound(lower.begin(), lower.end(), b);
      if (it == lower.end() || *it != b) {
        lower.insert(it, b);
        pattern_dirty_ = true;
      }
    }
  }
}

void FactorGraph::add_factor(Factor f) {
  std::vector<int> blocks;
  for (const auto& k : f.keys) blocks.push_back(block_of(k));
  link_blocks(blocks);
  factor_blocks_.push_back(std::move(blocks));
  sqrt_info_.push_back(f.sqrt_information);
  factors_.push_back(std::move(f));
  pattern_dirty_ = true;
}

VariableKey FactorGraph::initialize(const Pose2& prior_mean, const Eigen::Matrix3d& prior_cov) {
  if (!values_.poses.empty()) throw Error("graph already initialized");
  Pose2 p = prior_mean;
  p.theta = normalize_angle(p.theta);
  values_.poses.push_back(p);
  initial_.poses.push_back(p);
  const auto key = pose_key(0);
  pose_block_.push_back(add_block(key));
  add_factor(Factor::make(FactorKind::kPrior, {key}, Eigen::Vector3d(p.x, p.y, p.theta), prior_cov));
  return key;
}

VariableKey FactorGraph::add_pose(const Pose2Delta& delta, const Eigen::Matrix3d& cov) {
  if (values_.poses.empty()) throw Error("add_pose before initialize");
  const int i = static_cast<int>(values_.poses.size());
  const Pose2 guess = pose_compose(values_.poses.back(), delta);
  values_.poses.push_back(guess);
  initial_.poses.push_back(guess);
  const auto key = pose_key(i);
  pose_block_.push_back(add_block(key));
  add_factor(Factor::make(FactorKind::kOdometry, {pose_key(i - 1), key},
                          Eigen::Vector3d(delta.dx, delta.dy, normalize_angle(delta.dtheta)), cov));
  return key;
}

void FactorGraph::add_gps(const VariableKey& pose, const Eigen::VectorXd& z, const Eigen::MatrixXd& cov) {
  block_of(pose);
  add_factor(Factor::make(FactorKind::kGps, {pose}, z, cov));
}

void FactorGraph::add_observation(const VariableKey& pose, int landmark, const RangeBearing& z,
                                  double sigma_range, double sigma_bearing) {
  if (!(z.range > 0.0)) throw Error("observation range must be positive");
  const Pose2& p = values_.pose(pose.index);
  const auto lkey = landmark_key(landmark);
  if (!has_landmark(landmark)) {
    const Point2 guess = project_range_bearing(p, z);
    values_.landmarks[landmark] = guess;
    initial_.landmarks[landmark] = guess;
    landmark_block_[landmark] = add_block(lkey);
  }
  Eigen::Matrix2d cov = Eigen::Vector2d(sigma_range * sigma_range, sigma_bearing * sigma_bearing).asDiagonal();
  add_factor(Factor::make(FactorKind::kRangeBearing, {pose, lkey}, Eigen::Vector2d(z.range, z.bearing), cov));
}

void FactorGraph::add_inter_distance(int landmark_i, int landmark_j, double delta, double sigma) {
  if (landmark_i == landmark_j) throw Error("inter-distance factor needs two distinct landmarks");
  Eigen::Matrix<double, 1, 1> cov(sigma * sigma);
  add_factor(Factor::make(FactorKind::kInterDistance, {landmark_key(landmark_i), landmark_key(landmark_j)},
                          Eigen::Matrix<double, 1, 1>(delta), cov));
}

// ---------------------------------------------------------------------------
// Normal equations

void FactorGraph::rebuild_pattern() {
  const int nb = static_cast<int>(blocks_.size());
  dim_ = nb == 0 ? 0 : blocks_.back().offset + blocks_.back().dim;

  // Column layout: own-block rows at and below the diagonal, then the rows of
  // every higher-index neighbor block in ascending order.
  std::vector<int> outer(dim_ + 1, 0);
  std::vector<std::vector<int>> nb_offset(nb);
  for (int b = 0; b < nb; ++b) {
    const Block& blk = blocks_[b];
    int acc = 0;
    nb_offset[b].reserve(blk.lower.size());
    for (int other : blk.lower) {
      nb_offset[b].push_back(acc);
      acc += blocks_[other].dim;
    }
    for (int k = 0; k < blk.dim; ++k) outer[blk.offset + k + 1] = (blk.dim - k) + acc;
  }
  for (int c = 0; c < dim_; ++c) outer[c + 1] += outer[c];

  std::vector<int> inner(outer[dim_]);
  for (int b = 0; b < nb; ++b) {
    const Block& blk = blocks_[b];
    for (int k = 0; k < blk.dim; ++k) {
      int pos = outer[blk.offset + k];
      for (int r = k; r < blk.dim; ++r) inner[pos++] = blk.offset + r;
      for (int other : blk.lower) {
        for (int r = 0; r < blocks_[other].dim; ++r) inner[pos++] = blocks_[other].offset + r;
      }
    }
  }

  hessian_.resize(dim_, dim_);
  hessian_.resizeNonZeros(outer[dim_]);
  std::copy(outer.begin(), outer.end(), hessian_.outerIndexPtr());
  std::copy(inner.begin(), inner.end(), hessian_.innerIndexPtr());
  std::fill(hessian_.valuePtr(), hessian_.valuePtr() + outer[dim_], 0.0);

  auto slot = [&](int row_block, int r, int col_block, int c) {
    const Block& cb = blocks_[col_block];
    const int col = cb.offset + c;
    if (row_block == col_block) return outer[col] + (r - c);
    auto it = std::lower_bound(cb.lower.begin(), cb.lower.end(), row_block);
    const int idx = static_cast<int>(it - cb.lower.begin());
    return outer[col] + (cb.dim - c) + nb_offset[col_block][idx] + r;
  };

  factor_slots_.assign(factors_.size(), {});
  for (std::size_t fi = 0; fi < factors_.size(); ++fi) {
    const auto& fb = factor_blocks_[fi];
    auto& slots = factor_slots_[fi];
    int total = 0;
    for (int b : fb) total += blocks_[b].dim;
    slots.reserve(total * (total + 1) / 2);
    for (std::size_t p = 0; p < fb.size(); ++p) {
      for (std::size_t q = 0; q < fb.size(); ++q) {
        if (fb[p] < fb[q]) continue;
        const int dp = blocks_[fb[p]].dim;
        const int dq = blocks_[fb[q]].dim;
        for (int c = 0; c < dq; ++c) {
          for (int r = 0; r < dp; ++r) {
            if (p == q && r < c) continue;
            slots.push_back(slot(fb[p], r, fb[q], c));
          }
        }
      }
    }
  }
  diagonal_slots_.resize(dim_);
  for (int c = 0; c < dim_; ++c) diagonal_slots_[c] = outer[c];
  pattern_dirty_ = false;
}

void FactorGraph::accumulate(const Values& v, const SolverOptions& options, Eigen::VectorXd& gradient,
                             double& cost) {
  double* h = hessian_.valuePtr();
  std::fill(h, h + hessian_.nonZeros(), 0.0);
  gradient.setZero(dim_);
  cost = 0.0;
  Linearized lin;
  for (std::size_t fi = 0; fi < factors_.size(); ++fi) {
    const Factor& f = factors_[fi];
    evaluate(f, v, true, lin);
    const Mat& w = sqrt_info_[fi];
    Vec r = w * lin.r;
    Mat blocks[2];
    for (int b = 0; b < lin.n_blocks; ++b) blocks[b].noalias() = w * lin.blocks[b];
    const double e2 = r.squaredNorm();
    if (options.huber_threshold && e2 > (*options.huber_threshold) * (*options.huber_threshold)) {
      const double k = *options.huber_threshold;
      const double e = std::sqrt(e2);
      const double hw = std::sqrt(k / e);
      r *= hw;
      for (int b = 0; b < lin.n_blocks; ++b) blocks[b] *= hw;
      cost += 2.0 * k * e - k * k;
    } else {
      cost += e2;
    }

    const auto& fb = factor_blocks_[fi];
    const auto& slots = factor_slots_[fi];
    std::size_t s = 0;
    for (std::size_t p = 0; p < fb.size(); ++p) {
      const Block& bp = blocks_[fb[p]];
      gradient.segment(bp.offset, bp.dim) += blocks[p].transpose() * r;
      for (std::size_t q = 0; q < fb.size(); ++q) {
        if (fb[p] < fb[q]) continue;
        const Mat jtj = blocks[p].transpose() * blocks[q];
        for (int c = 0; c < jtj.cols(); ++c) {
          for (int rr = 0; rr < jtj.rows(); ++rr) {
            if (p == q && rr < c) continue;
            h[slots[s++]] += jtj(rr, c);
          }
        }
      }
    }
  }
}

Values FactorGraph::retract(const Values& v, const Eigen::VectorXd& delta) const {
  Values out = v;
  for (const Block& b : blocks_) {
    if (b.key.kind == VariableKind::kPose) {
      Pose2& p = out.poses[b.key.index];
      p.x += delta(b.offset);
      p.y += delta(b.offset + 1);
      p.theta = normalize_angle(p.theta + delta(b.offset + 2));
    } else {
      Point2& l = out.landmarks[b.key.index];
      l.x += delta(b.offset);
      l.y += delta(b.offset + 1);
    }
  }
  return out;
}

double FactorGraph::robust_cost(const Values& v, const SolverOptions& options) const {
  const double k = options.huber_threshold.value_or(0.0);
  Linearized lin;
  double c = 0.0;
  for (std::size_t fi = 0; fi < factors_.size(); ++fi) {
    evaluate(factors_[fi], v, false, lin);
    const double e2 = (sqrt_info_[fi] * lin.r).squaredNorm();
    c += (!options.huber_threshold || e2 <= k * k) ? e2 : 2.0 * k * std::sqrt(e2) - k * k;
  }
  return c;
}

SolveReport FactorGraph::optimize(OptimizeMode mode, const SolverOptions& options) {
  const bool gauge_fixed = std::any_of(factors_.begin(), factors_.end(), [](const Factor& f) {
    return f.kind == FactorKind::kPrior || f.kind == FactorKind::kGps;
  });
  if (!gauge_fixed) throw Error("optimize: graph needs a prior or GPS factor to fix the gauge");

  if (mode == OptimizeMode::kBatch) values_ = initial_;
  if (pattern_dirty_) rebuild_pattern();

  SolveReport report;
  Eigen::VectorXd gradient;
  double cost = 0.0;
  accumulate(values_, options, gradient, cost);
  report.initial_cost = cost;
  report.cost_history.push_back(cost);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> solver;
  solver.analyzePattern(hessian_);

  double lambda = options.initial_lambda;
  Eigen::SparseMatrix<double> damped = hessian_;
  while (report.iterations < options.max_iterations) {
    if (cost <= options.absolute_tolerance) {
      report.converged = true;
      break;
    }
    std::copy(hessian_.valuePtr(), hessian_.valuePtr() + hessian_.nonZeros(), damped.valuePtr());
    for (int c = 0; c < dim_; ++c) {
      const double d = hessian_.valuePtr()[diagonal_slots_[c]];
      damped.valuePtr()[diagonal_slots_[c]] += lambda * std::max(d, 1e-9);
    }
    solver.factorize(damped);
    if (solver.info() != Eigen::Success || !(solver.vectorD().minCoeff() > 0.0)) {
      throw NumericalFailureError("normal equations are not positive definite");
    }
    const Eigen::VectorXd step = solver.solve(-gradient);
    ++report.iterations;
    if (!step.allFinite()) throw NumericalFailureError("non-finite solver step");

    Values candidate = retract(values_, step);
    const double new_cost = robust_cost(candidate, options);
    if (new_cost < cost) {
      const double decrease = (cost - new_cost) / cost;
      values_ = std::move(candidate);
      if (decrease < options.relative_tolerance) {
        cost = new_cost;
        report.cost_history.push_back(cost);
        report.converged = true;
        break;
      }
      lambda = std::max(lambda * 0.1, 1e-12);
      accumulate(values_, options, gradient, cost);
      report.cost_history.push_back(cost);
    } else {
      lambda *= 10.0;
      if (lambda > options.max_lambda) {
        // No descent available at machine precision: a stationary point.
        report.converged = true;
        break;
      }
    }
  }
  report.final_cost = cost;
  report.estimates = values_;
  return report;
}

}  // namespace treeslam

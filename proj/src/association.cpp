#include "treeslam/association.hpp"

#include <algorithm>
#include <deque>

#include "treeslam/error.hpp"
#include "treeslam/hungarian.hpp"

namespace treeslam {

AxisKalman::AxisKalman(double x0, const KalmanConfig& cfg) : cfg_(cfg) {
  state_ << x0, 0.0;
  cov_ << cfg.measurement_var, 0.0, 0.0, cfg.initial_velocity_var;
}

void AxisKalman::predict(int frames) {
  if (frames <= 0) return;
  Eigen::Matrix2d f;
  f << 1.0, frames, 0.0, 1.0;
  state_ = f * state_;
  cov_ = f * cov_ * f.transpose() + (cfg_.process_var * frames) * Eigen::Matrix2d::Identity();
}

void AxisKalman::update(double measured_x) {
  const double innovation = measured_x - state_(0);
  const double s = cov_(0, 0) + cfg_.measurement_var;
  const Eigen::Vector2d gain = cov_.col(0) / s;
  state_ += gain * innovation;
  const Eigen::Matrix2d i_kh = Eigen::Matrix2d::Identity() - gain * Eigen::RowVector2d(1.0, 0.0);
  cov_ = i_kh * cov_;
  cov_ = (0.5 * (cov_ + cov_.transpose())).eval();
}

const char* to_string(MatchStage stage) {
  switch (stage) {
    case MatchStage::kIou: return "IOU";
    case MatchStage::kCascade: return "CASCADE";
    case MatchStage::kGlobal: return "GLOBAL";
  }
  return "?";
}

AssociationConfig AssociationConfig::for_planting_distance(double planting_distance) {
  AssociationConfig cfg;
  cfg.dist_gate = 0.5 * planting_distance;
  cfg.neighbor_radius = 1.5 * planting_distance;
  return cfg;
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

BBox kalman_predict_bbox(const Track& track, int frame) {
  const int elapsed = std::max(0, frame - track.last_seen_frame);
  const double shift = track.x_filter.predicted_position(elapsed) - track.last_bbox.center_x();
  BBox b = track.last_bbox;
  b.x_min += shift;
  b.x_max += shift;
  return b;
}

std::vector<Pairing> associate_stage1(std::span<const Track> tracks,
                                      std::span<const Detection> detections, int frame,
                                      double iou_gate, int max_frames_unseen,
                                      std::optional<double> world_gate) {
  std::vector<int> eligible;
  for (int t = 0; t < static_cast<int>(tracks.size()); ++t) {
    if (frame - tracks[t].last_seen_frame <= max_frames_unseen) eligible.push_back(t);
  }
  if (eligible.empty() || detections.empty()) return {};

  Eigen::MatrixXd cost(eligible.size(), detections.size());
  for (int r = 0; r < cost.rows(); ++r) {
    const BBox predicted = kalman_predict_bbox(tracks[eligible[r]], frame);
    for (int c = 0; c < cost.cols(); ++c) cost(r, c) = 1.0 - iou(predicted, detections[c].bbox);
  }
  std::vector<Pairing> out;
  for (const auto& [r, c] : gated_assignment(cost, 1.0 - iou_gate)) {
    if (1.0 - cost(r, c) < iou_gate) continue;
    if (world_gate && distance(tracks[eligible[r]].world_pos, detections[c].world_pos) > *world_gate) continue;
    out.push_back({eligible[r], c});
  }
  return out;
}

namespace {

std::vector<Pairing> euclidean_match(std::span<const Track> tracks,
                                     std::span<const Detection> detections,
                                     std::span<const int> track_idx, std::span<const int> det_idx,
                                     double dist_gate) {
  if (track_idx.empty() || det_idx.empty()) return {};
  Eigen::MatrixXd cost(track_idx.size(), det_idx.size());
  for (int r = 0; r < cost.rows(); ++r) {
    for (int c = 0; c < cost.cols(); ++c) {
      cost(r, c) = distance(tracks[track_idx[r]].world_pos, detections[det_idx[c]].world_pos);
    }
  }
  std::vector<Pairing> out;
  for (const auto& [r, c] : gated_assignment(cost, dist_gate)) {
    out.push_back({track_idx[r], det_idx[c]});
  }
  return out;
}

}  // namespace

std::vector<Pairing> associate_cascade(std::span<const Track> tracks,
                                       std::span<const Detection> detections,
                                       std::span<const int> matched_tracks,
                                       std::span<const int> unassoc_tracks,
                                       std::span<const int> unassoc_detections, double radius,
                                       double dist_gate) {
  std::vector<bool> track_open(tracks.size(), false);
  std::vector<bool> det_open(detections.size(), false);
  for (int t : unassoc_tracks) track_open[t] = true;
  for (int d : unassoc_detections) det_open[d] = true;

  auto by_id = [&](int a, int b) { return tracks[a].id < tracks[b].id; };
  std::vector<int> seeds(matched_tracks.begin(), matched_tracks.end());
  std::sort(seeds.begin(), seeds.end(), by_id);
  std::deque<int> frontier(seeds.begin(), seeds.end());

  std::vector<Pairing> out;
  while (!frontier.empty()) {
    const Point2 center = tracks[frontier.front()].world_pos;
    frontier.pop_front();

    std::vector<int> near_tracks;
    for (int t : unassoc_tracks) {
      if (track_open[t] && distance(tracks[t].world_pos, center) < radius) near_tracks.push_back(t);
    }
    std::vector<int> near_dets;
    for (int d : unassoc_detections) {
      if (det_open[d] && distance(detections[d].world_pos, center) < radius) near_dets.push_back(d);
    }
    auto found = euclidean_match(tracks, detections, near_tracks, near_dets, dist_gate);
    std::vector<int> joined;
    for (const auto& p : found) {
      track_open[p.track] = false;
      det_open[p.detection] = false;
      joined.push_back(p.track);
      out.push_back(p);
    }
    std::sort(joined.begin(), joined.end(), by_id);
    frontier.insert(frontier.end(), joined.begin(), joined.end());
  }
  return out;
}

std::vector<Pairing> associate_global(std::span<const Track> tracks,
                                      std::span<const Detection> detections,
                                      std::span<const int> unassoc_tracks,
                                      std::span<const int> unassoc_detections, double dist_gate) {
  return euclidean_match(tracks, detections, unassoc_tracks, unassoc_detections, dist_gate);
}

const Track* Tracker::find(int id) const {
  if (id < 0 || id >= static_cast<int>(tracks_.size())) return nullptr;
  return &tracks_[id];
}

Track* Tracker::find_mut(int id) { return const_cast<Track*>(std::as_const(*this).find(id)); }

void Tracker::set_world_pos(int id, Point2 p) {
  Track* t = find_mut(id);
  if (t == nullptr) throw MissingKeyError("unknown track id " + std::to_string(id));
  t->world_pos = p;
}

AssociationResult Tracker::step(std::span<const Detection> detections, int frame) {
  AssociationResult result;
  const int n_tracks = static_cast<int>(tracks_.size());
  const int n_dets = static_cast<int>(detections.size());
  std::vector<bool> track_used(n_tracks, false);
  std::vector<bool> det_used(n_dets, false);

  auto record = [&](const std::vector<Pairing>& pairs, MatchStage stage) {
    for (const auto& p : pairs) {
      track_used[p.track] = true;
      det_used[p.detection] = true;
      result.matches.push_back({tracks_[p.track].id, p.detection, stage});
    }
  };

  const auto stage1 = associate_stage1(tracks_, detections, frame, cfg_.iou_gate, cfg_.max_frames_unseen,
                                       cfg_.stage1_world_gate ? std::optional(cfg_.dist_gate) : std::nullopt);
  record(stage1, MatchStage::kIou);

  std::vector<int> open_tracks;
  std::vector<int> open_dets;
  for (int t = 0; t < n_tracks; ++t) {
    if (!track_used[t]) open_tracks.push_back(t);
  }
  for (int d = 0; d < n_dets; ++d) {
    if (!det_used[d]) open_dets.push_back(d);
  }

  if (!stage1.empty()) {
    if (cfg_.enable_cascade) {
      std::vector<int> matched;
      for (const auto& p : stage1) matched.push_back(p.track);
      record(associate_cascade(tracks_, detections, matched, open_tracks, open_dets,
                               cfg_.neighbor_radius, cfg_.dist_gate),
             MatchStage::kCascade);
      if (cfg_.global_after_cascade) {
        std::erase_if(open_tracks, [&](int t) { return track_used[t]; });
        std::erase_if(open_dets, [&](int d) { return det_used[d]; });
        record(associate_global(tracks_, detections, open_tracks, open_dets, cfg_.dist_gate),
               MatchStage::kGlobal);
      }
    }
  } else {
    record(associate_global(tracks_, detections, open_tracks, open_dets, cfg_.dist_gate),
           MatchStage::kGlobal);
  }

  for (const auto& m : result.matches) {
    Track& t = tracks_[m.track_id];
    const Detection& d = detections[m.detection];
    t.x_filter.predict(frame - t.last_seen_frame);
    t.x_filter.update(d.bbox.center_x());
    t.last_bbox = d.bbox;
    t.last_seen_frame = frame;
    ++t.hits;
  }

  for (int d = 0; d < n_dets; ++d) {
    if (det_used[d]) continue;
    Track t;
    t.id = next_id_++;
    t.last_bbox = detections[d].bbox;
    t.x_filter = AxisKalman(detections[d].bbox.center_x(), cfg_.kalman);
    t.world_pos = detections[d].world_pos;
    t.last_seen_frame = frame;
    t.hits = 1;
    tracks_.push_back(t);
    result.new_track_detections.push_back(d);
    result.new_track_ids.push_back(t.id);
  }
  return result;
}

}  // namespace treeslam

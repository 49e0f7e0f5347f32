#include "polarbg/tracking.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "polarbg/error.hpp"
#include "polarbg/io.hpp"

namespace polarbg::tracking {

namespace {

// Cost of a pair that is outside the gate or involves padding. Larger than any
// sum of gated distances, so cardinality dominates the objective.
constexpr double kForbidden = 1e6;

Eigen::Matrix<double, 2, 4> measurement_matrix() {
  Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  return h;
}

void record(Track& t, std::int64_t frame) {
  t.history.push_back({frame, t.state(0), t.state(1), t.state(2), t.state(3), t.status});
}

TrackStatus status_from_string(std::string_view s, std::size_t line) {
  if (s == "tentative") return TrackStatus::Tentative;
  if (s == "confirmed") return TrackStatus::Confirmed;
  if (s == "deleted") return TrackStatus::Deleted;
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": unknown status '" + std::string(s) + "'");
}

bool polygons_overlap(const geom::Polygon& a, const geom::Polygon& b) {
  for (const auto& p : a) {
    if (geom::point_in_polygon(p, b)) return true;
  }
  for (const auto& p : b) {
    if (geom::point_in_polygon(p, a)) return true;
  }
  // Edge crossings without vertex containment, e.g. two crossing bars.
  const auto cross = [](geom::Point2 o, geom::Point2 p, geom::Point2 q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto a0 = a[i];
    const auto a1 = a[(i + 1) % a.size()];
    for (std::size_t j = 0; j < b.size(); ++j) {
      const auto b0 = b[j];
      const auto b1 = b[(j + 1) % b.size()];
      if (cross(b0, b1, a0) * cross(b0, b1, a1) < 0.0 && cross(a0, a1, b0) * cross(a0, a1, b1) < 0.0) return true;
    }
  }
  return false;
}

}  // namespace

void TrackerConfig::validate() const {
  if (!(process_noise_accel > 0.0) || !(meas_noise_pos > 0.0) || !(gate > 0.0) || confirm_m < 1 ||
      confirm_n < confirm_m || confirm_n > 32 || delete_after_misses < 1 || !(dt > 0.0) ||
      !(initial_speed_sigma > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "invalid tracker configuration");
  }
}

void to_json(nlohmann::json& j, const TrackerConfig& cfg) {
  j = nlohmann::json{{"process_noise_accel", cfg.process_noise_accel},
                     {"meas_noise_pos", cfg.meas_noise_pos},
                     {"gate", cfg.gate},
                     {"confirm_m", cfg.confirm_m},
                     {"confirm_n", cfg.confirm_n},
                     {"delete_after_misses", cfg.delete_after_misses},
                     {"dt", cfg.dt},
                     {"initial_speed_sigma", cfg.initial_speed_sigma}};
}

void from_json(const nlohmann::json& j, TrackerConfig& cfg) {
  cfg = TrackerConfig{};
  cfg.process_noise_accel = j.value("process_noise_accel", cfg.process_noise_accel);
  cfg.meas_noise_pos = j.value("meas_noise_pos", cfg.meas_noise_pos);
  cfg.gate = j.value("gate", cfg.gate);
  cfg.confirm_m = j.value("confirm_m", cfg.confirm_m);
  cfg.confirm_n = j.value("confirm_n", cfg.confirm_n);
  cfg.delete_after_misses = j.value("delete_after_misses", cfg.delete_after_misses);
  cfg.dt = j.value("dt", cfg.dt);
  cfg.initial_speed_sigma = j.value("initial_speed_sigma", cfg.initial_speed_sigma);
  cfg.validate();
}

std::string to_string(TrackStatus status) {
  switch (status) {
    case TrackStatus::Tentative: return "tentative";
    case TrackStatus::Confirmed: return "confirmed";
    case TrackStatus::Deleted: return "deleted";
  }
  return "tentative";
}

Track make_track(int id, double x, double y, std::int64_t frame, const TrackerConfig& cfg) {
  Track t;
  t.id = id;
  t.state << x, y, 0.0, 0.0;
  const double r2 = cfg.meas_noise_pos * cfg.meas_noise_pos;
  const double v2 = cfg.initial_speed_sigma * cfg.initial_speed_sigma;
  t.covariance = Eigen::Vector4d(r2, r2, v2, v2).asDiagonal();
  t.hits = 1;
  t.age = 1;
  t.window = 1;
  if (cfg.confirm_m <= 1) {
    t.status = TrackStatus::Confirmed;
    t.ever_confirmed = true;
  }
  record(t, frame);
  return t;
}

Track predict(const Track& track, double dt, const TrackerConfig& cfg) {
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  const double q = cfg.process_noise_accel * cfg.process_noise_accel;
  const double dt2 = dt * dt;
  Eigen::Matrix4d qm = Eigen::Matrix4d::Zero();
  for (int axis = 0; axis < 2; ++axis) {
    qm(axis, axis) = q * dt2 * dt2 / 4.0;
    qm(axis, axis + 2) = qm(axis + 2, axis) = q * dt2 * dt / 2.0;
    qm(axis + 2, axis + 2) = q * dt2;
  }
  Track out = track;
  out.state = f * track.state;
  out.covariance = f * track.covariance * f.transpose() + qm;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

double mahalanobis(const Track& track, double x, double y, const TrackerConfig& cfg) {
  const auto h = measurement_matrix();
  const Eigen::Matrix2d s = h * track.covariance * h.transpose() +
                            Eigen::Matrix2d::Identity() * cfg.meas_noise_pos * cfg.meas_noise_pos;
  const Eigen::Vector2d innovation = Eigen::Vector2d(x, y) - h * track.state;
  Eigen::LLT<Eigen::Matrix2d> llt(s);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "innovation covariance not PD");
  return std::sqrt(innovation.dot(llt.solve(innovation)));
}

Track update(const Track& track, double x, double y, const TrackerConfig& cfg) {
  const auto h = measurement_matrix();
  const Eigen::Matrix2d r = Eigen::Matrix2d::Identity() * cfg.meas_noise_pos * cfg.meas_noise_pos;
  const Eigen::Matrix2d s = h * track.covariance * h.transpose() + r;
  Eigen::LLT<Eigen::Matrix2d> llt(s);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "innovation covariance not PD");
  const Eigen::Matrix<double, 4, 2> gain = llt.solve(h * track.covariance).transpose();
  const Eigen::Vector2d innovation = Eigen::Vector2d(x, y) - h * track.state;

  Track out = track;
  out.state = track.state + gain * innovation;
  const Eigen::Matrix4d ikh = Eigen::Matrix4d::Identity() - gain * h;
  out.covariance = ikh * track.covariance * ikh.transpose() + gain * r * gain.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw Error(ErrorCode::ShapeMismatch, "assignment needs a square matrix");
  // Shortest augmenting path with potentials; arrays are 1-based, index 0 is the sentinel.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
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
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  }
  return row_to_col;
}

Association associate(std::span<const Track> tracks, std::span<const pipeline::Detection> detections,
                      const TrackerConfig& cfg) {
  Association out;
  const auto nt = tracks.size();
  const auto nd = detections.size();
  const auto n = std::max(nt, nd);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), kForbidden);
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t d = 0; d < nd; ++d) {
      const double dist = mahalanobis(tracks[t], detections[d].centroid.x, detections[d].centroid.y, cfg);
      if (dist <= cfg.gate) cost(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = dist;
    }
  }
  std::vector<char> track_used(nt, false), det_used(nd, false);
  if (n > 0) {
    const auto assignment = solve_assignment(cost);
    for (std::size_t t = 0; t < nt; ++t) {
      const int d = assignment[t];
      if (d < 0 || static_cast<std::size_t>(d) >= nd) continue;
      const double c = cost(static_cast<Eigen::Index>(t), d);
      if (c >= kForbidden) continue;
      out.matches.emplace_back(t, static_cast<std::size_t>(d));
      out.total_cost += c;
      track_used[t] = true;
      det_used[static_cast<std::size_t>(d)] = true;
    }
  }
  for (std::size_t t = 0; t < nt; ++t) {
    if (!track_used[t]) out.unmatched_tracks.push_back(t);
  }
  for (std::size_t d = 0; d < nd; ++d) {
    if (!det_used[d]) out.unmatched_detections.push_back(d);
  }
  return out;
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void Tracker::step(std::span<const pipeline::Detection> detections, std::int64_t frame_id) {
  if (started_ && frame_id <= last_frame_) {
    throw Error(ErrorCode::FrameOrderError, "frame " + std::to_string(frame_id) + " after " +
                                                std::to_string(last_frame_));
  }
  const double dt = started_ ? static_cast<double>(frame_id - last_frame_) * cfg_.dt : 0.0;
  const auto frames_elapsed = started_ ? frame_id - last_frame_ : 1;
  started_ = true;
  last_frame_ = frame_id;

  std::vector<std::size_t> live;
  std::vector<Track> predicted;
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    if (tracks_[i].status == TrackStatus::Deleted) continue;
    live.push_back(i);
    predicted.push_back(dt > 0.0 ? predict(tracks_[i], dt, cfg_) : tracks_[i]);
  }

  const auto assoc = associate(predicted, detections, cfg_);
  std::vector<char> hit(predicted.size(), false);
  for (auto [t, d] : assoc.matches) {
    predicted[t] = update(predicted[t], detections[d].centroid.x, detections[d].centroid.y, cfg_);
    hit[t] = true;
  }

  const std::uint32_t window_mask = cfg_.confirm_n >= 32 ? ~0u : ((1u << cfg_.confirm_n) - 1u);
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    Track& t = predicted[k];
    const auto shift = static_cast<std::uint32_t>(std::min<std::int64_t>(frames_elapsed, 31));
    t.window = (t.window << shift) & window_mask;
    t.age += static_cast<int>(frames_elapsed);
    if (hit[k]) {
      t.window |= 1u;
      ++t.hits;
      t.misses = 0;
    } else {
      t.misses += static_cast<int>(frames_elapsed);
    }
    if (t.status == TrackStatus::Tentative && std::popcount(t.window) >= cfg_.confirm_m) {
      t.status = TrackStatus::Confirmed;
      t.ever_confirmed = true;
    }
    if (t.misses >= cfg_.delete_after_misses ||
        (t.status == TrackStatus::Tentative && t.age >= cfg_.confirm_n)) {
      t.status = TrackStatus::Deleted;
    }
    if (hit[k]) record(t, frame_id);
    tracks_[live[k]] = std::move(t);
  }

  for (auto d : assoc.unmatched_detections) {
    tracks_.push_back(make_track(next_id_++, detections[d].centroid.x, detections[d].centroid.y, frame_id, cfg_));
  }
}

std::vector<Trajectory> extract_trajectories(const Tracker& tracker) {
  std::vector<Trajectory> out;
  for (const auto& t : tracker.tracks()) {
    if (!t.ever_confirmed) continue;
    out.push_back({t.id, t.status == TrackStatus::Deleted ? TrackStatus::Deleted : TrackStatus::Confirmed,
                   t.history});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.track_id < b.track_id; });
  return out;
}

void MovementZones::validate() const {
  for (std::size_t i = 0; i < zones.size(); ++i) {
    geom::validate_polygon(zones[i].polygon);
    for (std::size_t j = 0; j < i; ++j) {
      if (zones[i].name == zones[j].name) {
        throw Error(ErrorCode::InvalidPolygon, "duplicate zone name '" + zones[i].name + "'");
      }
      if (polygons_overlap(zones[i].polygon, zones[j].polygon)) {
        throw Error(ErrorCode::InvalidPolygon, "zones '" + zones[j].name + "' and '" + zones[i].name + "' overlap");
      }
    }
  }
}

MovementZones zones_from_json(const nlohmann::json& j) {
  MovementZones zones;
  try {
    for (const auto& z : j.at("zones")) {
      zones.zones.push_back({z.at("name").get<std::string>(), geom::polygon_from_json(z.at("polygon"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("zones: ") + e.what());
  }
  zones.validate();
  return zones;
}

nlohmann::json zones_to_json(const MovementZones& zones) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& z : zones.zones) list.push_back({{"name", z.name}, {"polygon", geom::polygon_to_json(z.polygon)}});
  return {{"zones", list}};
}

MovementCounts count_movements(std::span<const Trajectory> trajectories, const MovementZones& zones,
                               std::size_t k) {
  MovementCounts out;
  auto zone_of = [&](std::span<const HistoryEntry> pts) -> const NamedZone* {
    for (const auto& z : zones.zones) {
      const bool all = std::all_of(pts.begin(), pts.end(), [&](const HistoryEntry& e) {
        return geom::point_in_polygon({e.x, e.y}, z.polygon);
      });
      if (all) return &z;
    }
    return nullptr;
  };
  for (const auto& traj : trajectories) {
    const std::span<const HistoryEntry> pts(traj.points);
    const auto n = std::min(k, pts.size());
    const NamedZone* entry = n > 0 ? zone_of(pts.first(n)) : nullptr;
    const NamedZone* exit = n > 0 ? zone_of(pts.last(n)) : nullptr;
    if (entry == nullptr || exit == nullptr) {
      ++out.unclassified;
      out.unclassified_ids.push_back(traj.track_id);
      continue;
    }
    ++out.counts[{entry->name, exit->name}];
  }
  return out;
}

nlohmann::json counts_to_json(const MovementCounts& counts) {
  nlohmann::json movements = nlohmann::json::object();
  for (const auto& [key, n] : counts.counts) {
    movements[key.first + "->" + key.second] = {{"entry", key.first}, {"exit", key.second}, {"count", n}};
  }
  return {{"movements", movements}, {"unclassified", counts.unclassified}, {"unclassified_ids", counts.unclassified_ids}};
}

MovementCounts counts_from_json(const nlohmann::json& j) {
  MovementCounts out;
  try {
    for (const auto& [name, m] : j.at("movements").items()) {
      out.counts[{m.at("entry").get<std::string>(), m.at("exit").get<std::string>()}] = m.at("count").get<int>();
    }
    out.unclassified = j.value("unclassified", 0);
    if (j.contains("unclassified_ids")) j.at("unclassified_ids").get_to(out.unclassified_ids);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("counts: ") + e.what());
  }
  return out;
}

std::string write_tracks_csv(std::span<const Trajectory> trajectories) {
  std::string out = kTracksCsvHeader;
  out += '\n';
  for (const auto& t : trajectories) {
    const auto id = std::to_string(t.track_id);
    for (const auto& e : t.points) {
      out += id + ',' + std::to_string(e.frame) + ',' + io::format_number(e.x) + ',' + io::format_number(e.y) + ',' +
             io::format_number(e.vx) + ',' + io::format_number(e.vy) + ',' + to_string(e.status) + '\n';
    }
  }
  return out;
}

std::vector<Trajectory> read_tracks_csv(const std::string& contents) {
  io::CsvReader reader(contents, kTracksCsvHeader);
  std::map<int, Trajectory> grouped;
  std::vector<std::string_view> f;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    if (f.size() != 7) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": expected 7 fields");
    const int id = static_cast<int>(io::parse_int(f[0], line));
    HistoryEntry e;
    e.frame = io::parse_int(f[1], line);
    e.x = io::parse_double(f[2], line);
    e.y = io::parse_double(f[3], line);
    e.vx = io::parse_double(f[4], line);
    e.vy = io::parse_double(f[5], line);
    e.status = status_from_string(f[6], line);
    auto& traj = grouped[id];
    traj.track_id = id;
    if (!traj.points.empty() && e.frame <= traj.points.back().frame) {
      throw Error(ErrorCode::FrameOrderError, "line " + std::to_string(line) + ": frames must increase per track");
    }
    traj.points.push_back(e);
  }
  std::vector<Trajectory> out;
  for (auto& [id, t] : grouped) out.push_back(std::move(t));
  return out;
}

}  // namespace polarbg::tracking

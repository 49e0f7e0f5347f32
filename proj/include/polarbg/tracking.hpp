#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polarbg/geometry.hpp"
#include "polarbg/pipeline.hpp"

namespace polarbg::tracking {

struct TrackerConfig {
  double process_noise_accel = 2.0;  // m/s^2, white acceleration
  double meas_noise_pos = 0.3;       // m
  double gate = 3.0;                 // Mahalanobis distance
  int confirm_m = 3;
  int confirm_n = 5;
  int delete_after_misses = 5;
  double dt = 0.1;                   // seconds per frame id
  double initial_speed_sigma = 10.0; // m/s, prior on a new track's velocity

  void validate() const;
};

void to_json(nlohmann::json& j, const TrackerConfig& cfg);
void from_json(const nlohmann::json& j, TrackerConfig& cfg);

enum class TrackStatus { Tentative, Confirmed, Deleted };

std::string to_string(TrackStatus status);

struct HistoryEntry {
  std::int64_t frame = 0;
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  TrackStatus status = TrackStatus::Tentative;
};

struct Track {
  int id = 0;
  Eigen::Vector4d state = Eigen::Vector4d::Zero();  // x, y, vx, vy
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
  TrackStatus status = TrackStatus::Tentative;
  int hits = 0;
  int misses = 0;       // consecutive
  int age = 0;          // frames since creation
  std::uint32_t window = 0;  // bit i set = hit i frames ago
  bool ever_confirmed = false;
  std::vector<HistoryEntry> history;
};

/// New tentative track centred on a measurement with zero velocity.
Track make_track(int id, double x, double y, std::int64_t frame, const TrackerConfig& cfg);

/// Constant-velocity time update.
Track predict(const Track& track, double dt, const TrackerConfig& cfg);

/// Mahalanobis distance of a position measurement from the track's prediction.
double mahalanobis(const Track& track, double x, double y, const TrackerConfig& cfg);

/// Position-only Kalman measurement update (Joseph form).
Track update(const Track& track, double x, double y, const TrackerConfig& cfg);

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, detection)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
  double total_cost = 0.0;
};

/// Minimum-cost one-to-one assignment of a square cost matrix (Hungarian method).
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Gated global-nearest-neighbour association: most gated pairs, then least total distance.
Association associate(std::span<const Track> tracks, std::span<const pipeline::Detection> detections,
                      const TrackerConfig& cfg);

class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg);

  /// Throws FrameOrderError unless frame ids strictly increase.
  void step(std::span<const pipeline::Detection> detections, std::int64_t frame_id);

  const std::vector<Track>& tracks() const { return tracks_; }
  const TrackerConfig& config() const { return cfg_; }

 private:
  TrackerConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_ = 0;
  std::int64_t last_frame_ = 0;
  bool started_ = false;
};

struct Trajectory {
  int track_id = 0;
  TrackStatus status = TrackStatus::Confirmed;
  std::vector<HistoryEntry> points;
};

/// Tracks that ever reached Confirmed, in id order.
std::vector<Trajectory> extract_trajectories(const Tracker& tracker);

struct NamedZone {
  std::string name;
  geom::Polygon polygon;
};

struct MovementZones {
  std::vector<NamedZone> zones;

  /// Throws InvalidPolygon for non-simple or overlapping zones.
  void validate() const;
};

MovementZones zones_from_json(const nlohmann::json& j);
nlohmann::json zones_to_json(const MovementZones& zones);

struct MovementCounts {
  std::map<std::pair<std::string, std::string>, int> counts;  // (entry, exit) -> count
  int unclassified = 0;
  std::vector<int> unclassified_ids;
};

/// Entry is the first zone holding all of the first k points, exit likewise for the last k.
MovementCounts count_movements(std::span<const Trajectory> trajectories, const MovementZones& zones,
                               std::size_t k = 3);

nlohmann::json counts_to_json(const MovementCounts& counts);
MovementCounts counts_from_json(const nlohmann::json& j);

inline constexpr const char* kTracksCsvHeader = "track_id,frame,x,y,vx,vy,status";

std::string write_tracks_csv(std::span<const Trajectory> trajectories);
std::vector<Trajectory> read_tracks_csv(const std::string& contents);

}  // namespace polarbg::tracking

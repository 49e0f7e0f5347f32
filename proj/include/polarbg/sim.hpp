#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polarbg/frames.hpp"
#include "polarbg/tracking.hpp"

namespace polarbg::sim {

/// Static axis-aligned box in the sensor frame.
struct Box {
  Vec3 min;
  Vec3 max;
  double intensity = 50.0;
};

struct Waypoint {
  double t = 0.0;  // seconds
  double x = 0.0;
  double y = 0.0;
  double heading_deg = 0.0;
};

/// Cuboid resting on the ground, present only between its first and last waypoint.
struct Vehicle {
  int id = 0;
  double length = 4.5;
  double width = 1.8;
  double height = 1.5;
  double intensity = 150.0;
  std::vector<Waypoint> path;
};

struct Scene {
  std::vector<Box> surfaces;
  bool has_ground = true;
  double ground_intensity = 20.0;
  double sensor_height = 1.7;  // ground plane sits at z = -sensor_height
  std::vector<Vehicle> vehicles;
  double range_sigma = 0.03;
  double intensity_sigma = 2.0;
  std::uint64_t seed = 1;
  bool quantize = true;  // ranges to 1 mm, intensities to integers

  void validate() const;
};

void to_json(nlohmann::json& j, const Scene& scene);
void from_json(const nlohmann::json& j, Scene& scene);

inline constexpr std::int32_t kLabelNonReturn = -2;
inline constexpr std::int32_t kLabelBackground = -1;

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians
  double vx = 0.0;
  double vy = 0.0;
};

/// Linear interpolation along the waypoint path; empty outside its time span.
std::optional<Pose> vehicle_pose(const Vehicle& vehicle, double t);

struct Hit {
  double distance = 0.0;
  double intensity = 0.0;
  std::int32_t label = kLabelBackground;
};

/// Nearest intersection along a unit direction from the sensor origin, any distance.
std::optional<Hit> trace_ray(const Scene& scene, std::span<const std::optional<Pose>> poses, const Vec3& dir);

struct RenderedFrame {
  PolarFrame frame;
  std::vector<std::int32_t> labels;  // per cell: vehicle id, kLabelBackground or kLabelNonReturn
};

RenderedFrame raycast(const Scene& scene, std::int64_t frame_id, const SensorConfig& cfg);

struct GroundTruth {
  std::vector<std::vector<std::int32_t>> labels;  // per frame
  std::vector<tracking::Trajectory> trajectories; // per vehicle, track_id = vehicle id
};

struct Simulation {
  std::vector<PolarFrame> frames;
  GroundTruth truth;
};

/// Frames at t = k / frame_rate for k in [0, n_frames).
Simulation simulate(const Scene& scene, int n_frames, const SensorConfig& cfg);

inline constexpr const char* kLabelsCsvHeader = "frame,beam,bin,label,vehicle_id";

/// One row per returned cell; non-returns are implied by their absence.
std::string write_labels_csv(std::span<const PolarFrame> frames, std::span<const std::vector<std::int32_t>> labels);

/// Rebuilds label grids for the given frames; cells without a row are non-returns.
std::vector<std::vector<std::int32_t>> read_labels_csv(const std::string& contents,
                                                       std::span<const PolarFrame> frames);

}  // namespace polarbg::sim

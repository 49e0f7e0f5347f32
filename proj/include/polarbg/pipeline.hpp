#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polarbg/background_model.hpp"
#include "polarbg/frames.hpp"
#include "polarbg/geometry.hpp"

namespace polarbg::pipeline {

/// Rasterized drivable area in the sensor's x-y plane.
struct RoiMask {
  double cell_size = 0.5;
  double origin_x = 0.0;
  double origin_y = 0.0;
  int cols = 0;
  int rows = 0;
  std::vector<std::uint8_t> grid;  // row-major, row = y index
  std::vector<geom::Polygon> source_polygons;

  bool contains(double x, double y) const;
};

/// A cell is drivable when its center lies inside any polygon.
RoiMask build_roi_mask(std::span<const geom::Polygon> polygons, double cell_size);

std::vector<geom::Polygon> roi_from_json(const nlohmann::json& j);

enum class FusionMode { Union, Intersection, RangeOnly, IntensityOnly };

FusionMode fusion_from_string(const std::string& name);
std::string to_string(FusionMode mode);

inline constexpr std::uint8_t kFlagIntensity = 1;
inline constexpr std::uint8_t kFlagRange = 2;

struct ForegroundPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  int beam = 0;
  int bin = 0;
  double range = 0.0;
  double intensity = 0.0;
  std::uint8_t flagged_by = 0;  // kFlagIntensity | kFlagRange
  int det_id = -1;
};

struct PipelineConfig {
  FusionMode fusion_mode = FusionMode::Union;
  int denoise_k = 4;
  double denoise_dmax = 1.0;
  double cluster_eps = 1.2;
  int min_cluster_points = 10;
  double roi_cell_size = 0.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& cfg);
void from_json(const nlohmann::json& j, PipelineConfig& cfg);

struct Detection {
  std::int64_t frame_id = 0;
  Vec3 centroid;
  double center_x = 0.0;
  double center_y = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;
  double yaw = 0.0;  // radians in [-pi/2, pi/2)
  double z_min = 0.0;
  double z_max = 0.0;
  int point_count = 0;
};

/// Keeps points whose (x, y) falls on a drivable cell.
std::vector<ForegroundPoint> apply_roi(std::span<const ForegroundPoint> points, const RoiMask& mask);

/// Per-cell flag bits of the fused foreground; zero means background.
std::vector<std::uint8_t> fuse_masks(std::span<const std::uint8_t> intensity_mask,
                                     std::span<const std::uint8_t> range_mask, FusionMode mode);

/// Drops points whose k-th nearest neighbour is farther than d_max.
std::vector<ForegroundPoint> denoise(std::span<const ForegroundPoint> points, int k, double d_max);

/// Connected components of the eps-neighbourhood graph with at least min_pts members,
/// ordered by their smallest point index. Each cluster lists point indices ascending.
std::vector<std::vector<std::size_t>> cluster(std::span<const ForegroundPoint> points, double eps,
                                              int min_pts);

/// PCA-oriented box over the listed points.
Detection bounding_box(std::span<const ForegroundPoint> points, std::span<const std::size_t> members);

/// True when (x, y, z) is inside the box grown by `margin` on every side.
bool box_contains(const Detection& det, const Vec3& p, double margin);

struct StageTimes {
  double mask_ms = 0.0;
  double fuse_ms = 0.0;
  double project_ms = 0.0;
  double denoise_ms = 0.0;
  double cluster_ms = 0.0;
  double total_ms = 0.0;
};

struct FrameResult {
  std::vector<Detection> detections;
  std::vector<ForegroundPoint> points;  // after ROI and denoising, det_id set when clustered
  std::size_t returns = 0;              // non-sentinel cells in the frame
  std::size_t foreground_cells = 0;     // cells flagged by the fused mask
};

/// Full per-frame detection using the model's sensor and intensity threshold.
FrameResult detect_frame(const PolarFrame& frame, const BackgroundModel& model, const RoiMask& roi,
                         const PipelineConfig& cfg, StageTimes* times = nullptr);

inline constexpr const char* kDetectionsCsvHeader =
    "frame,det_id,cx,cy,cz,len,wid,yaw_rad,zmin,zmax,points";
inline constexpr const char* kForegroundCsvHeader = "frame,beam,bin,x,y,z,intensity,flags,det_id";

/// Detections of one frame are listed in det_id order.
std::string write_detections_csv(std::span<const std::vector<Detection>> per_frame);
std::vector<Detection> read_detections_csv(const std::string& contents);

std::string write_foreground_csv(std::span<const std::int64_t> frame_ids,
                                 std::span<const std::vector<ForegroundPoint>> per_frame);

struct ForegroundCell {
  std::int64_t frame = 0;
  int beam = 0;
  int bin = 0;
  int det_id = -1;
};
std::vector<ForegroundCell> read_foreground_csv(const std::string& contents);

}  // namespace polarbg::pipeline

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace polarbg {

struct SensorConfig {
  int beam_count = 0;
  std::vector<double> elevations;  // degrees, one per beam, strictly ascending
  int azimuth_bins = 1800;
  double azimuth_resolution = 0.2;  // degrees
  double max_range = 200.0;         // meters
  double frame_rate = 10.0;         // Hz

  /// Throws InvalidConfig when an invariant is broken.
  void validate() const;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(beam_count) * static_cast<std::size_t>(azimuth_bins);
  }
};

void to_json(nlohmann::json& j, const SensorConfig& cfg);
void from_json(const nlohmann::json& j, SensorConfig& cfg);

/// FNV-1a over the canonical JSON form, as 16 hex digits.
std::string sensor_hash(const SensorConfig& cfg);

/// One laser return. range == 0 marks a non-return.
struct PointRecord {
  int beam = 0;
  double azimuth = 0.0;  // degrees in [0, 360)
  double range = 0.0;    // meters
  double intensity = 0.0;
};

/// One sweep as a beam x azimuth-bin grid. Storage is row-major by beam.
struct PolarFrame {
  std::int64_t frame_id = 0;
  double timestamp = 0.0;
  int beam_count = 0;
  int azimuth_bins = 0;
  std::vector<double> range;
  std::vector<double> intensity;

  PolarFrame() = default;
  PolarFrame(std::int64_t id, const SensorConfig& cfg);

  std::size_t index(int beam, int bin) const {
    return static_cast<std::size_t>(beam) * static_cast<std::size_t>(azimuth_bins) +
           static_cast<std::size_t>(bin);
  }
  bool is_return(std::size_t cell) const { return range[cell] > 0.0; }
  std::span<const double> beam_range(int beam) const {
    return {range.data() + index(beam, 0), static_cast<std::size_t>(azimuth_bins)};
  }
  std::span<const double> beam_intensity(int beam) const {
    return {intensity.data() + index(beam, 0), static_cast<std::size_t>(azimuth_bins)};
  }
  bool same_shape(const PolarFrame& other) const {
    return beam_count == other.beam_count && azimuth_bins == other.azimuth_bins;
  }
};

enum class Channel { Range, Intensity };

/// Per-beam spatial-temporal matrix: azimuth bins as rows, frames as columns.
struct STMatrix {
  int beam = 0;
  Channel channel = Channel::Intensity;
  Eigen::MatrixXd data;
  std::vector<std::int64_t> frame_ids;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct Spherical {
  double range = 0.0;
  double elevation = 0.0;  // degrees
  double azimuth = 0.0;    // degrees in [0, 360)
};

Vec3 spherical_to_cartesian(double range, double elevation_deg, double azimuth_deg);

/// Inverse of spherical_to_cartesian. The pole maps to azimuth 0.
Spherical cartesian_to_spherical(double x, double y, double z);

/// Wraps any angle into [0, 360).
double normalize_azimuth(double alpha);

/// Hash of an azimuth into its grid column: (floor(alpha / res) + 1) mod bins.
int azimuth_bin(double alpha, const SensorConfig& cfg);

/// Azimuth at the middle of a bin's interval, the inverse of azimuth_bin.
double bin_center_azimuth(int bin, const SensorConfig& cfg);

/// Places each point in its (beam, bin) cell; on collision the smaller range wins.
PolarFrame assemble_frame(std::span<const PointRecord> points, std::int64_t frame_id,
                          const SensorConfig& cfg);

/// Column j holds the beam's channel vector from the j-th frame by frame id.
STMatrix build_st_matrix(std::span<const PolarFrame> frames, int beam, Channel channel);

/// Cartesian position of a cell using its beam elevation and bin-center azimuth.
Vec3 cell_position(const PolarFrame& frame, int beam, int bin, const SensorConfig& cfg);

// Frame file format: `frame,beam,azimuth_deg,range_m,intensity`, one row per return.
inline constexpr const char* kFramesCsvHeader = "frame,beam,azimuth_deg,range_m,intensity";

std::string write_frames_csv(std::span<const PolarFrame> frames, const SensorConfig& cfg);
std::vector<PolarFrame> read_frames_csv(const std::string& contents, const SensorConfig& cfg);

}  // namespace polarbg

#include "polarbg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "polarbg/error.hpp"
#include "polarbg/io.hpp"

namespace polarbg::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// Uniform voxel hash over 3-D points for fixed-radius neighbour queries.
class VoxelIndex {
 public:
  VoxelIndex(std::span<const ForegroundPoint> points, double cell) : cell_(cell) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      buckets_[key(coord(points[i].x), coord(points[i].y), coord(points[i].z))].push_back(i);
    }
  }

  template <typename Fn>
  void for_each_near(const ForegroundPoint& p, Fn&& fn) const {
    const auto cx = coord(p.x);
    const auto cy = coord(p.y);
    const auto cz = coord(p.z);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = buckets_.find(key(cx + dx, cy + dy, cz + dz));
          if (it == buckets_.end()) continue;
          for (auto j : it->second) fn(j);
        }
      }
    }
  }

 private:
  std::int64_t coord(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::int64_t key(std::int64_t x, std::int64_t y, std::int64_t z) {
    constexpr std::int64_t kOffset = 1 << 20;
    return ((x + kOffset) << 42) | ((y + kOffset) << 21) | (z + kOffset);
  }

  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets_;
};

double dist2(const ForegroundPoint& a, const ForegroundPoint& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

}  // namespace

bool RoiMask::contains(double x, double y) const {
  const double fx = std::floor((x - origin_x) / cell_size);
  const double fy = std::floor((y - origin_y) / cell_size);
  if (fx < 0.0 || fy < 0.0 || fx >= cols || fy >= rows) return false;
  return grid[static_cast<std::size_t>(fy) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(fx)] != 0;
}

RoiMask build_roi_mask(std::span<const geom::Polygon> polygons, double cell_size) {
  if (!(cell_size > 0.0)) throw Error(ErrorCode::InvalidConfig, "ROI cell size must be positive");
  if (polygons.empty()) throw Error(ErrorCode::InvalidPolygon, "ROI needs at least one polygon");
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  for (const auto& poly : polygons) {
    geom::validate_polygon(poly);
    for (const auto& p : poly) {
      min_x = std::min(min_x, p.x);
      min_y = std::min(min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
  }

  RoiMask mask;
  mask.cell_size = cell_size;
  mask.origin_x = min_x;
  mask.origin_y = min_y;
  mask.cols = std::max(1, static_cast<int>(std::ceil((max_x - min_x) / cell_size)));
  mask.rows = std::max(1, static_cast<int>(std::ceil((max_y - min_y) / cell_size)));
  mask.grid.assign(static_cast<std::size_t>(mask.cols) * static_cast<std::size_t>(mask.rows), 0);
  mask.source_polygons.assign(polygons.begin(), polygons.end());
  for (int r = 0; r < mask.rows; ++r) {
    for (int c = 0; c < mask.cols; ++c) {
      const geom::Point2 center{min_x + (c + 0.5) * cell_size, min_y + (r + 0.5) * cell_size};
      bool inside = false;
      for (const auto& poly : polygons) {
        if (geom::point_in_polygon(center, poly)) {
          inside = true;
          break;
        }
      }
      mask.grid[static_cast<std::size_t>(r) * static_cast<std::size_t>(mask.cols) + static_cast<std::size_t>(c)] = inside;
    }
  }
  return mask;
}

std::vector<geom::Polygon> roi_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "ROI must be a JSON list of rings");
  std::vector<geom::Polygon> polygons;
  for (const auto& ring : j) polygons.push_back(geom::polygon_from_json(ring));
  return polygons;
}

FusionMode fusion_from_string(const std::string& name) {
  if (name == "union") return FusionMode::Union;
  if (name == "intersection") return FusionMode::Intersection;
  if (name == "range") return FusionMode::RangeOnly;
  if (name == "intensity") return FusionMode::IntensityOnly;
  throw Error(ErrorCode::InvalidConfig, "unknown fusion mode '" + name + "'");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Union: return "union";
    case FusionMode::Intersection: return "intersection";
    case FusionMode::RangeOnly: return "range";
    case FusionMode::IntensityOnly: return "intensity";
  }
  return "union";
}

void PipelineConfig::validate() const {
  if (denoise_k < 1 || !(denoise_dmax > 0.0) || !(cluster_eps > 0.0) || min_cluster_points < 1 ||
      !(roi_cell_size > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "pipeline parameters must be positive");
  }
}

void to_json(nlohmann::json& j, const PipelineConfig& cfg) {
  j = nlohmann::json{{"fusion_mode", to_string(cfg.fusion_mode)},
                     {"denoise_k", cfg.denoise_k},
                     {"denoise_dmax", cfg.denoise_dmax},
                     {"cluster_eps", cfg.cluster_eps},
                     {"min_cluster_points", cfg.min_cluster_points},
                     {"roi_cell_size", cfg.roi_cell_size}};
}

void from_json(const nlohmann::json& j, PipelineConfig& cfg) {
  cfg = PipelineConfig{};
  cfg.fusion_mode = fusion_from_string(j.value("fusion_mode", std::string("union")));
  cfg.denoise_k = j.value("denoise_k", cfg.denoise_k);
  cfg.denoise_dmax = j.value("denoise_dmax", cfg.denoise_dmax);
  cfg.cluster_eps = j.value("cluster_eps", cfg.cluster_eps);
  cfg.min_cluster_points = j.value("min_cluster_points", cfg.min_cluster_points);
  cfg.roi_cell_size = j.value("roi_cell_size", cfg.roi_cell_size);
  cfg.validate();
}

std::vector<ForegroundPoint> apply_roi(std::span<const ForegroundPoint> points, const RoiMask& mask) {
  std::vector<ForegroundPoint> kept;
  for (const auto& p : points) {
    if (mask.contains(p.x, p.y)) kept.push_back(p);
  }
  return kept;
}

std::vector<std::uint8_t> fuse_masks(std::span<const std::uint8_t> intensity_mask,
                                     std::span<const std::uint8_t> range_mask, FusionMode mode) {
  if (intensity_mask.size() != range_mask.size()) {
    throw Error(ErrorCode::ShapeMismatch, "intensity and range masks differ in size");
  }
  std::vector<std::uint8_t> fused(intensity_mask.size(), 0);
  for (std::size_t c = 0; c < fused.size(); ++c) {
    const std::uint8_t bits = (intensity_mask[c] ? kFlagIntensity : 0) | (range_mask[c] ? kFlagRange : 0);
    switch (mode) {
      case FusionMode::Union: fused[c] = bits; break;
      case FusionMode::Intersection: fused[c] = bits == (kFlagIntensity | kFlagRange) ? bits : 0; break;
      case FusionMode::RangeOnly: fused[c] = bits & kFlagRange; break;
      case FusionMode::IntensityOnly: fused[c] = bits & kFlagIntensity; break;
    }
  }
  return fused;
}

std::vector<ForegroundPoint> denoise(std::span<const ForegroundPoint> points, int k, double d_max) {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "denoise k must be >= 1");
  if (points.size() <= static_cast<std::size_t>(k)) return {points.begin(), points.end()};
  // k-distance <= d_max exactly when at least k other points lie within d_max.
  const VoxelIndex index(points, d_max);
  const double limit = d_max * d_max;
  std::vector<ForegroundPoint> kept;
  kept.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    int neighbours = 0;
    index.for_each_near(points[i], [&](std::size_t j) {
      if (j != i && dist2(points[i], points[j]) <= limit) ++neighbours;
    });
    if (neighbours >= k) kept.push_back(points[i]);
  }
  return kept;
}

std::vector<std::vector<std::size_t>> cluster(std::span<const ForegroundPoint> points, double eps,
                                              int min_pts) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "cluster eps must be positive");
  std::vector<std::size_t> parent(points.size());
  std::iota(parent.begin(), parent.end(), 0);
  const VoxelIndex index(points, eps);
  const double limit = eps * eps;
  for (std::size_t i = 0; i < points.size(); ++i) {
    index.for_each_near(points[i], [&](std::size_t j) {
      if (j <= i || dist2(points[i], points[j]) > limit) return;
      const auto a = find_root(parent, i);
      const auto b = find_root(parent, j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    });
  }

  // Roots are the smallest member index, so map order is first-appearance order.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < points.size(); ++i) groups[find_root(parent, i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) {
    if (members.size() >= static_cast<std::size_t>(min_pts)) out.push_back(std::move(members));
  }
  return out;
}

Detection bounding_box(std::span<const ForegroundPoint> points, std::span<const std::size_t> members) {
  if (members.empty()) throw Error(ErrorCode::DegenerateInput, "empty cluster");
  Detection det;
  const double n = static_cast<double>(members.size());
  double mx = 0.0, my = 0.0, mz = 0.0;
  det.z_min = std::numeric_limits<double>::infinity();
  det.z_max = -det.z_min;
  for (auto i : members) {
    mx += points[i].x;
    my += points[i].y;
    mz += points[i].z;
    det.z_min = std::min(det.z_min, points[i].z);
    det.z_max = std::max(det.z_max, points[i].z);
  }
  mx /= n;
  my /= n;
  mz /= n;
  det.centroid = {mx, my, mz};
  det.point_count = static_cast<int>(members.size());

  double cxx = 0.0, cyy = 0.0, cxy = 0.0;
  for (auto i : members) {
    const double dx = points[i].x - mx;
    const double dy = points[i].y - my;
    cxx += dx * dx;
    cyy += dy * dy;
    cxy += dx * dy;
  }
  double yaw = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);

  auto extents = [&](double angle, double& u0, double& u1, double& v0, double& v1) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    u0 = v0 = std::numeric_limits<double>::infinity();
    u1 = v1 = -u0;
    for (auto i : members) {
      const double dx = points[i].x - mx;
      const double dy = points[i].y - my;
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      u0 = std::min(u0, u);
      u1 = std::max(u1, u);
      v0 = std::min(v0, v);
      v1 = std::max(v1, v);
    }
  };
  double u0, u1, v0, v1;
  extents(yaw, u0, u1, v0, v1);
  if (v1 - v0 > u1 - u0) {
    yaw += std::numbers::pi / 2.0;
    extents(yaw, u0, u1, v0, v1);
  }
  // Keep yaw in [-pi/2, pi/2); the box is symmetric under a half turn.
  while (yaw >= std::numbers::pi / 2.0) yaw -= std::numbers::pi;
  while (yaw < -std::numbers::pi / 2.0) yaw += std::numbers::pi;
  extents(yaw, u0, u1, v0, v1);

  constexpr double kMinWidth = 0.1;
  const double uc = 0.5 * (u0 + u1);
  const double vc = 0.5 * (v0 + v1);
  det.half_length = std::max(0.5 * (u1 - u0), 0.5 * kMinWidth);
  det.half_width = std::max(0.5 * (v1 - v0), 0.5 * kMinWidth);
  det.half_width = std::min(det.half_width, det.half_length);
  det.yaw = yaw;
  det.center_x = mx + std::cos(yaw) * uc - std::sin(yaw) * vc;
  det.center_y = my + std::sin(yaw) * uc + std::cos(yaw) * vc;
  return det;
}

bool box_contains(const Detection& det, const Vec3& p, double margin) {
  const double c = std::cos(det.yaw);
  const double s = std::sin(det.yaw);
  const double dx = p.x - det.center_x;
  const double dy = p.y - det.center_y;
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= det.half_length + margin && std::abs(v) <= det.half_width + margin &&
         p.z >= det.z_min - margin && p.z <= det.z_max + margin;
}

FrameResult detect_frame(const PolarFrame& frame, const BackgroundModel& model, const RoiMask& roi,
                         const PipelineConfig& cfg, StageTimes* times) {
  const auto start = Clock::now();
  const auto& sensor = model.sensor;
  if (frame.beam_count != sensor.beam_count || frame.azimuth_bins != sensor.azimuth_bins) {
    throw Error(ErrorCode::ModelMismatch, "frame grid does not match the model's sensor");
  }
  cfg.validate();

  FrameResult result;
  auto t = Clock::now();
  std::vector<std::uint8_t> intensity_mask(frame.range.size(), 0);
  const double tau = model.dmd.intensity_threshold;
  for (int beam = 0; beam < sensor.beam_count; ++beam) {
    const auto& bg = model.beams[static_cast<std::size_t>(beam)].background;
    const auto m = dmd::intensity_foreground_mask(frame.beam_intensity(beam), frame.beam_range(beam), bg, tau);
    std::copy(m.begin(), m.end(), intensity_mask.begin() + static_cast<std::ptrdiff_t>(frame.index(beam, 0)));
  }
  const auto range_mask = cfta::range_foreground_mask(frame, model.thresholds);
  if (times) times->mask_ms = elapsed_ms(t);

  t = Clock::now();
  const auto fused = fuse_masks(intensity_mask, range_mask, cfg.fusion_mode);
  if (times) times->fuse_ms = elapsed_ms(t);

  t = Clock::now();
  std::vector<ForegroundPoint> candidates;
  for (int beam = 0; beam < sensor.beam_count; ++beam) {
    for (int bin = 0; bin < sensor.azimuth_bins; ++bin) {
      const auto cell = frame.index(beam, bin);
      if (frame.is_return(cell)) ++result.returns;
      if (!fused[cell]) continue;
      ++result.foreground_cells;
      const auto pos = cell_position(frame, beam, bin, sensor);
      if (!roi.contains(pos.x, pos.y)) continue;
      ForegroundPoint p;
      p.x = pos.x;
      p.y = pos.y;
      p.z = pos.z;
      p.beam = beam;
      p.bin = bin;
      p.range = frame.range[cell];
      p.intensity = frame.intensity[cell];
      p.flagged_by = fused[cell];
      candidates.push_back(p);
    }
  }
  if (times) times->project_ms = elapsed_ms(t);

  t = Clock::now();
  result.points = denoise(candidates, cfg.denoise_k, cfg.denoise_dmax);
  if (times) times->denoise_ms = elapsed_ms(t);

  t = Clock::now();
  const auto clusters = cluster(result.points, cfg.cluster_eps, cfg.min_cluster_points);
  for (std::size_t id = 0; id < clusters.size(); ++id) {
    auto det = bounding_box(result.points, clusters[id]);
    det.frame_id = frame.frame_id;
    for (auto i : clusters[id]) result.points[i].det_id = static_cast<int>(id);
    result.detections.push_back(det);
  }
  if (times) {
    times->cluster_ms = elapsed_ms(t);
    times->total_ms = elapsed_ms(start);
  }
  return result;
}

std::string write_detections_csv(std::span<const std::vector<Detection>> per_frame) {
  std::string out = kDetectionsCsvHeader;
  out += '\n';
  for (const auto& dets : per_frame) {
    for (std::size_t id = 0; id < dets.size(); ++id) {
      const auto& d = dets[id];
      out += std::to_string(d.frame_id) + ',' + std::to_string(id) + ',' + io::format_number(d.centroid.x) +
             ',' + io::format_number(d.centroid.y) + ',' + io::format_number(d.centroid.z) + ',' +
             io::format_number(2.0 * d.half_length) + ',' + io::format_number(2.0 * d.half_width) + ',' +
             io::format_number(d.yaw) + ',' + io::format_number(d.z_min) + ',' +
             io::format_number(d.z_max) + ',' + std::to_string(d.point_count) + '\n';
    }
  }
  return out;
}

std::vector<Detection> read_detections_csv(const std::string& contents) {
  io::CsvReader reader(contents, kDetectionsCsvHeader);
  std::vector<std::string_view> f;
  std::vector<Detection> out;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    if (f.size() != 11) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": expected 11 fields");
    Detection d;
    d.frame_id = io::parse_int(f[0], line);
    d.centroid = {io::parse_double(f[2], line), io::parse_double(f[3], line), io::parse_double(f[4], line)};
    d.center_x = d.centroid.x;
    d.center_y = d.centroid.y;
    d.half_length = 0.5 * io::parse_double(f[5], line);
    d.half_width = 0.5 * io::parse_double(f[6], line);
    d.yaw = io::parse_double(f[7], line);
    d.z_min = io::parse_double(f[8], line);
    d.z_max = io::parse_double(f[9], line);
    d.point_count = static_cast<int>(io::parse_int(f[10], line));
    out.push_back(d);
  }
  return out;
}

std::string write_foreground_csv(std::span<const std::int64_t> frame_ids,
                                 std::span<const std::vector<ForegroundPoint>> per_frame) {
  if (frame_ids.size() != per_frame.size()) throw Error(ErrorCode::ShapeMismatch, "frame id count");
  std::string out = kForegroundCsvHeader;
  out += '\n';
  for (std::size_t f = 0; f < per_frame.size(); ++f) {
    const auto frame = std::to_string(frame_ids[f]);
    for (const auto& p : per_frame[f]) {
      std::string flags;
      if (p.flagged_by & kFlagIntensity) flags += 'I';
      if (p.flagged_by & kFlagRange) flags += 'R';
      out += frame + ',' + std::to_string(p.beam) + ',' + std::to_string(p.bin) + ',' + io::format_number(p.x) +
             ',' + io::format_number(p.y) + ',' + io::format_number(p.z) + ',' +
             io::format_number(p.intensity) + ',' + flags + ',' + std::to_string(p.det_id) + '\n';
    }
  }
  return out;
}

std::vector<ForegroundCell> read_foreground_csv(const std::string& contents) {
  io::CsvReader reader(contents, kForegroundCsvHeader);
  std::vector<std::string_view> f;
  std::vector<ForegroundCell> out;
  while (reader.next(f)) {
    const auto line = reader.line_number();
    if (f.size() != 9) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": expected 9 fields");
    ForegroundCell c;
    c.frame = io::parse_int(f[0], line);
    c.beam = static_cast<int>(io::parse_int(f[1], line));
    c.bin = static_cast<int>(io::parse_int(f[2], line));
    c.det_id = static_cast<int>(io::parse_int(f[8], line));
    out.push_back(c);
  }
  return out;
}

}  // namespace polarbg::pipeline

#include "polarbg/frames.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <numeric>

#include "polarbg/error.hpp"
#include "polarbg/io.hpp"

namespace polarbg {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

void SensorConfig::validate() const {
  if (beam_count <= 0) throw Error(ErrorCode::InvalidConfig, "beam_count must be positive");
  if (static_cast<int>(elevations.size()) != beam_count) {
    throw Error(ErrorCode::InvalidConfig, "elevations length must equal beam_count");
  }
  for (std::size_t i = 0; i < elevations.size(); ++i) {
    if (!(elevations[i] >= -90.0 && elevations[i] <= 90.0)) {
      throw Error(ErrorCode::InvalidConfig, "elevation outside [-90, 90]");
    }
    if (i > 0 && !(elevations[i] > elevations[i - 1])) {
      throw Error(ErrorCode::InvalidConfig, "elevations must be strictly ascending");
    }
  }
  if (azimuth_bins <= 0) throw Error(ErrorCode::InvalidConfig, "azimuth_bins must be positive");
  if (!(azimuth_resolution > 0.0) ||
      std::abs(azimuth_bins * azimuth_resolution - 360.0) > 1e-9) {
    throw Error(ErrorCode::InvalidConfig, "azimuth_bins * azimuth_resolution must equal 360");
  }
  if (!(max_range > 0.0)) throw Error(ErrorCode::InvalidConfig, "max_range must be positive");
  if (!(frame_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "frame_rate must be positive");
}

void to_json(nlohmann::json& j, const SensorConfig& cfg) {
  j = nlohmann::json{{"beam_count", cfg.beam_count},
                     {"elevations", cfg.elevations},
                     {"azimuth_bins", cfg.azimuth_bins},
                     {"azimuth_resolution", cfg.azimuth_resolution},
                     {"max_range", cfg.max_range},
                     {"frame_rate", cfg.frame_rate}};
}

void from_json(const nlohmann::json& j, SensorConfig& cfg) {
  cfg = SensorConfig{};
  j.at("elevations").get_to(cfg.elevations);
  cfg.beam_count = j.value("beam_count", static_cast<int>(cfg.elevations.size()));
  cfg.azimuth_bins = j.value("azimuth_bins", cfg.azimuth_bins);
  cfg.azimuth_resolution = j.value("azimuth_resolution", 360.0 / cfg.azimuth_bins);
  cfg.max_range = j.value("max_range", cfg.max_range);
  cfg.frame_rate = j.value("frame_rate", cfg.frame_rate);
  cfg.validate();
}

std::string sensor_hash(const SensorConfig& cfg) {
  const std::string canonical = nlohmann::json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PolarFrame::PolarFrame(std::int64_t id, const SensorConfig& cfg)
    : frame_id(id),
      timestamp(static_cast<double>(id) / cfg.frame_rate),
      beam_count(cfg.beam_count),
      azimuth_bins(cfg.azimuth_bins),
      range(cfg.cell_count(), 0.0),
      intensity(cfg.cell_count(), 0.0) {}

Vec3 spherical_to_cartesian(double range, double elevation_deg, double azimuth_deg) {
  const double w = elevation_deg * kDegToRad;
  const double a = normalize_azimuth(azimuth_deg) * kDegToRad;
  return {range * std::cos(w) * std::cos(a), range * std::cos(w) * std::sin(a),
          range * std::sin(w)};
}

Spherical cartesian_to_spherical(double x, double y, double z) {
  const double r = std::sqrt(x * x + y * y + z * z);
  if (r == 0.0) throw Error(ErrorCode::DegenerateInput, "zero vector has no direction");
  const double horizontal = std::hypot(x, y);
  const double elevation = std::atan2(z, horizontal) / kDegToRad;
  const double azimuth = horizontal == 0.0 ? 0.0 : normalize_azimuth(std::atan2(y, x) / kDegToRad);
  return {r, elevation, azimuth};
}

double normalize_azimuth(double alpha) {
  double a = std::fmod(alpha, 360.0);
  if (a < 0.0) a += 360.0;
  if (a >= 360.0) a = 0.0;  // -tiny + 360 rounds to 360
  return a;
}

int azimuth_bin(double alpha, const SensorConfig& cfg) {
  // alpha * bins / 360 equals alpha / resolution but stays exact on bin edges.
  const double scaled = normalize_azimuth(alpha) * cfg.azimuth_bins / 360.0;
  const auto raw = static_cast<long long>(std::floor(scaled)) + 1;
  return static_cast<int>(raw % cfg.azimuth_bins);
}

double bin_center_azimuth(int bin, const SensorConfig& cfg) {
  const int left = bin == 0 ? cfg.azimuth_bins - 1 : bin - 1;
  return (left + 0.5) * 360.0 / cfg.azimuth_bins;
}

PolarFrame assemble_frame(std::span<const PointRecord> points, std::int64_t frame_id,
                          const SensorConfig& cfg) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const bool ok = p.beam >= 0 && p.beam < cfg.beam_count && p.azimuth >= 0.0 &&
                    p.azimuth < 360.0 && p.range >= 0.0 && p.range <= cfg.max_range &&
                    p.intensity >= 0.0 && p.intensity <= 255.0;
    if (!ok) throw Error(ErrorCode::InvalidPoint, "point index " + std::to_string(i));
  }

  // A fixed processing order makes the equal-range tie deterministic.
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& p = points[a];
    const auto& q = points[b];
    if (p.beam != q.beam) return p.beam < q.beam;
    if (p.azimuth != q.azimuth) return p.azimuth < q.azimuth;
    if (p.intensity != q.intensity) return p.intensity > q.intensity;
    return p.range < q.range;
  });

  PolarFrame frame(frame_id, cfg);
  for (auto i : order) {
    const auto& p = points[i];
    if (p.range <= 0.0) continue;
    const auto cell = frame.index(p.beam, azimuth_bin(p.azimuth, cfg));
    if (frame.range[cell] == 0.0 || p.range < frame.range[cell]) {
      frame.range[cell] = p.range;
      frame.intensity[cell] = p.intensity;
    }
  }
  return frame;
}

STMatrix build_st_matrix(std::span<const PolarFrame> frames, int beam, Channel channel) {
  if (frames.empty()) throw Error(ErrorCode::ShapeMismatch, "no frames");
  const auto& first = frames.front();
  if (beam < 0 || beam >= first.beam_count) throw Error(ErrorCode::ShapeMismatch, "beam out of range");
  for (const auto& f : frames) {
    if (!f.same_shape(first)) throw Error(ErrorCode::ShapeMismatch, "inconsistent frame shapes");
  }
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frames[a].frame_id < frames[b].frame_id;
  });

  STMatrix st;
  st.beam = beam;
  st.channel = channel;
  st.data.resize(first.azimuth_bins, static_cast<Eigen::Index>(frames.size()));
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto& f = frames[order[j]];
    const auto src = channel == Channel::Range ? f.beam_range(beam) : f.beam_intensity(beam);
    st.data.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Eigen::VectorXd>(src.data(), static_cast<Eigen::Index>(src.size()));
    st.frame_ids.push_back(f.frame_id);
  }
  return st;
}

Vec3 cell_position(const PolarFrame& frame, int beam, int bin, const SensorConfig& cfg) {
  return spherical_to_cartesian(frame.range[frame.index(beam, bin)],
                                cfg.elevations[static_cast<std::size_t>(beam)],
                                bin_center_azimuth(bin, cfg));
}

std::string write_frames_csv(std::span<const PolarFrame> frames, const SensorConfig& cfg) {
  std::vector<const PolarFrame*> sorted;
  for (const auto& f : frames) sorted.push_back(&f);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->frame_id < b->frame_id; });

  // Bin 0 holds the top of the circle, so it sorts last by azimuth.
  std::vector<int> bin_order;
  for (int b = 1; b < cfg.azimuth_bins; ++b) bin_order.push_back(b);
  bin_order.push_back(0);

  std::string out = kFramesCsvHeader;
  out += '\n';
  for (const auto* f : sorted) {
    const std::string frame_id = std::to_string(f->frame_id);
    for (int beam = 0; beam < f->beam_count; ++beam) {
      const std::string beam_str = std::to_string(beam);
      for (int bin : bin_order) {
        const auto cell = f->index(beam, bin);
        if (!f->is_return(cell)) continue;
        out += frame_id;
        out += ',';
        out += beam_str;
        out += ',';
        out += io::format_number(bin_center_azimuth(bin, cfg));
        out += ',';
        out += io::format_number(f->range[cell]);
        out += ',';
        out += io::format_number(f->intensity[cell]);
        out += '\n';
      }
    }
  }
  return out;
}

std::vector<PolarFrame> read_frames_csv(const std::string& contents, const SensorConfig& cfg) {
  io::CsvReader reader(contents, kFramesCsvHeader);
  std::map<std::int64_t, std::vector<PointRecord>> grouped;
  std::vector<std::string_view> fields;
  while (reader.next(fields)) {
    const auto line = reader.line_number();
    if (fields.size() != 5) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": expected 5 fields");
    }
    PointRecord p;
    const auto frame = io::parse_int(fields[0], line);
    p.beam = static_cast<int>(io::parse_int(fields[1], line));
    p.azimuth = io::parse_double(fields[2], line);
    p.range = io::parse_double(fields[3], line);
    p.intensity = io::parse_double(fields[4], line);
    grouped[frame].push_back(p);
  }
  std::vector<PolarFrame> frames;
  frames.reserve(grouped.size());
  for (const auto& [id, points] : grouped) frames.push_back(assemble_frame(points, id, cfg));
  return frames;
}

}  // namespace polarbg

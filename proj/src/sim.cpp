#include "polarbg/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "polarbg/error.hpp"
#include "polarbg/io.hpp"

namespace polarbg::sim {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kEpsilon = 1e-9;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Entry distance of a ray from `o` along `d` into an axis-aligned box.
std::optional<double> slab(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  const double os[3] = {o.x, o.y, o.z};
  const double ds[3] = {d.x, d.y, d.z};
  const double los[3] = {lo.x, lo.y, lo.z};
  const double his[3] = {hi.x, hi.y, hi.z};
  for (int a = 0; a < 3; ++a) {
    if (ds[a] == 0.0) {
      if (os[a] < los[a] || os[a] > his[a]) return std::nullopt;
      continue;
    }
    double ta = (los[a] - os[a]) / ds[a];
    double tb = (his[a] - os[a]) / ds[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (t0 > kEpsilon) return t0;
  return std::nullopt;  // origin inside or box behind
}

double ground_z(const Scene& scene) { return -scene.sensor_height; }

}  // namespace

void Scene::validate() const {
  for (const auto& b : surfaces) {
    if (!(b.min.x < b.max.x && b.min.y < b.max.y && b.min.z < b.max.z)) {
      throw Error(ErrorCode::InvalidConfig, "surface box must have positive extent");
    }
    if (b.intensity < 0.0 || b.intensity > 255.0) throw Error(ErrorCode::InvalidConfig, "surface intensity");
  }
  if (ground_intensity < 0.0 || ground_intensity > 255.0) throw Error(ErrorCode::InvalidConfig, "ground intensity");
  if (!(sensor_height > 0.0)) throw Error(ErrorCode::InvalidConfig, "sensor_height must be positive");
  if (range_sigma < 0.0 || intensity_sigma < 0.0) throw Error(ErrorCode::InvalidConfig, "noise must be >= 0");
  for (const auto& v : vehicles) {
    if (!(v.length > 0.0 && v.width > 0.0 && v.height > 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "vehicle dimensions must be positive");
    }
    if (v.intensity < 0.0 || v.intensity > 255.0) throw Error(ErrorCode::InvalidConfig, "vehicle intensity");
    if (v.path.empty()) throw Error(ErrorCode::InvalidConfig, "vehicle needs waypoints");
    for (std::size_t i = 1; i < v.path.size(); ++i) {
      if (!(v.path[i].t > v.path[i - 1].t)) {
        throw Error(ErrorCode::InvalidConfig, "waypoint times must strictly increase");
      }
    }
  }
}

void to_json(nlohmann::json& j, const Scene& scene) {
  nlohmann::json surfaces = nlohmann::json::array();
  for (const auto& b : scene.surfaces) {
    surfaces.push_back({{"min", {b.min.x, b.min.y, b.min.z}},
                        {"max", {b.max.x, b.max.y, b.max.z}},
                        {"intensity", b.intensity}});
  }
  nlohmann::json vehicles = nlohmann::json::array();
  for (const auto& v : scene.vehicles) {
    nlohmann::json path = nlohmann::json::array();
    for (const auto& w : v.path) path.push_back({w.t, w.x, w.y, w.heading_deg});
    vehicles.push_back({{"id", v.id},
                        {"length", v.length},
                        {"width", v.width},
                        {"height", v.height},
                        {"intensity", v.intensity},
                        {"waypoints", path}});
  }
  j = nlohmann::json{{"surfaces", surfaces},
                     {"ground", scene.has_ground ? nlohmann::json{{"intensity", scene.ground_intensity}}
                                                 : nlohmann::json(nullptr)},
                     {"sensor_height", scene.sensor_height},
                     {"vehicles", vehicles},
                     {"noise", {{"range_sigma", scene.range_sigma}, {"intensity_sigma", scene.intensity_sigma}}},
                     {"seed", scene.seed},
                     {"quantize", scene.quantize}};
}

void from_json(const nlohmann::json& j, Scene& scene) {
  scene = Scene{};
  for (const auto& b : j.value("surfaces", nlohmann::json::array())) {
    Box box;
    const auto& lo = b.at("min");
    const auto& hi = b.at("max");
    box.min = {lo.at(0).get<double>(), lo.at(1).get<double>(), lo.at(2).get<double>()};
    box.max = {hi.at(0).get<double>(), hi.at(1).get<double>(), hi.at(2).get<double>()};
    box.intensity = b.value("intensity", box.intensity);
    scene.surfaces.push_back(box);
  }
  if (j.contains("ground") && !j.at("ground").is_null()) {
    scene.has_ground = true;
    scene.ground_intensity = j.at("ground").value("intensity", scene.ground_intensity);
  } else {
    scene.has_ground = false;
  }
  scene.sensor_height = j.value("sensor_height", scene.sensor_height);
  int next_id = 0;
  for (const auto& v : j.value("vehicles", nlohmann::json::array())) {
    Vehicle veh;
    veh.id = v.value("id", next_id);
    next_id = veh.id + 1;
    veh.length = v.value("length", veh.length);
    veh.width = v.value("width", veh.width);
    veh.height = v.value("height", veh.height);
    veh.intensity = v.value("intensity", veh.intensity);
    for (const auto& w : v.at("waypoints")) {
      veh.path.push_back({w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>(), w.at(3).get<double>()});
    }
    scene.vehicles.push_back(std::move(veh));
  }
  if (j.contains("noise")) {
    scene.range_sigma = j.at("noise").value("range_sigma", scene.range_sigma);
    scene.intensity_sigma = j.at("noise").value("intensity_sigma", scene.intensity_sigma);
  }
  scene.seed = j.value("seed", scene.seed);
  scene.quantize = j.value("quantize", scene.quantize);
  scene.validate();
}

std::optional<Pose> vehicle_pose(const Vehicle& vehicle, double t) {
  const auto& path = vehicle.path;
  if (path.empty() || t < path.front().t || t > path.back().t) return std::nullopt;
  if (path.size() == 1) return Pose{path[0].x, path[0].y, path[0].heading_deg * kDegToRad, 0.0, 0.0};
  std::size_t seg = 0;
  while (seg + 2 < path.size() && t > path[seg + 1].t) ++seg;
  const auto& a = path[seg];
  const auto& b = path[seg + 1];
  const double span = b.t - a.t;
  const double u = (t - a.t) / span;
  Pose p;
  p.x = a.x + u * (b.x - a.x);
  p.y = a.y + u * (b.y - a.y);
  p.heading = (a.heading_deg + u * (b.heading_deg - a.heading_deg)) * kDegToRad;
  p.vx = (b.x - a.x) / span;
  p.vy = (b.y - a.y) / span;
  return p;
}

std::optional<Hit> trace_ray(const Scene& scene, std::span<const std::optional<Pose>> poses, const Vec3& dir) {
  std::optional<Hit> best;
  auto consider = [&](double distance, double intensity, std::int32_t label) {
    if (!best || distance < best->distance) best = Hit{distance, intensity, label};
  };
  const Vec3 origin{0.0, 0.0, 0.0};
  const double zg = ground_z(scene);
  if (scene.has_ground && dir.z < 0.0) consider(zg / dir.z, scene.ground_intensity, kLabelBackground);
  for (const auto& box : scene.surfaces) {
    if (auto t = slab(origin, dir, box.min, box.max)) consider(*t, box.intensity, kLabelBackground);
  }
  for (std::size_t i = 0; i < scene.vehicles.size() && i < poses.size(); ++i) {
    if (!poses[i]) continue;
    const auto& v = scene.vehicles[i];
    const auto& pose = *poses[i];
    // Ray in the vehicle's body frame.
    const double c = std::cos(pose.heading);
    const double s = std::sin(pose.heading);
    const Vec3 o{c * (origin.x - pose.x) + s * (origin.y - pose.y), -s * (origin.x - pose.x) + c * (origin.y - pose.y),
                 origin.z};
    const Vec3 d{c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z};
    const Vec3 lo{-v.length / 2.0, -v.width / 2.0, zg};
    const Vec3 hi{v.length / 2.0, v.width / 2.0, zg + v.height};
    if (auto t = slab(o, d, lo, hi)) consider(*t, v.intensity, v.id);
  }
  return best;
}

RenderedFrame raycast(const Scene& scene, std::int64_t frame_id, const SensorConfig& cfg) {
  const double t = static_cast<double>(frame_id) / cfg.frame_rate;
  std::vector<std::optional<Pose>> poses;
  poses.reserve(scene.vehicles.size());
  for (const auto& v : scene.vehicles) poses.push_back(vehicle_pose(v, t));

  RenderedFrame out{PolarFrame(frame_id, cfg), std::vector<std::int32_t>(cfg.cell_count(), kLabelNonReturn)};
  std::mt19937_64 rng(splitmix64(scene.seed ^ splitmix64(static_cast<std::uint64_t>(frame_id))));
  std::normal_distribution<double> unit(0.0, 1.0);

  std::vector<double> cos_az(static_cast<std::size_t>(cfg.azimuth_bins));
  std::vector<double> sin_az(cos_az.size());
  for (int bin = 0; bin < cfg.azimuth_bins; ++bin) {
    const double a = bin_center_azimuth(bin, cfg) * kDegToRad;
    cos_az[static_cast<std::size_t>(bin)] = std::cos(a);
    sin_az[static_cast<std::size_t>(bin)] = std::sin(a);
  }

  for (int beam = 0; beam < cfg.beam_count; ++beam) {
    const double w = cfg.elevations[static_cast<std::size_t>(beam)] * kDegToRad;
    const double cw = std::cos(w);
    const double sw = std::sin(w);
    for (int bin = 0; bin < cfg.azimuth_bins; ++bin) {
      const Vec3 dir{cw * cos_az[static_cast<std::size_t>(bin)], cw * sin_az[static_cast<std::size_t>(bin)], sw};
      const auto hit = trace_ray(scene, poses, dir);
      if (!hit || hit->distance > cfg.max_range) continue;
      double range = hit->distance + scene.range_sigma * unit(rng);
      double intensity = hit->intensity + scene.intensity_sigma * unit(rng);
      if (scene.quantize) {
        range = std::round(range * 1000.0) / 1000.0;
        intensity = std::round(intensity);
      }
      range = std::clamp(range, 1e-3, cfg.max_range);
      intensity = std::clamp(intensity, 0.0, 255.0);
      const auto cell = out.frame.index(beam, bin);
      out.frame.range[cell] = range;
      out.frame.intensity[cell] = intensity;
      out.labels[cell] = hit->label;
    }
  }
  return out;
}

Simulation simulate(const Scene& scene, int n_frames, const SensorConfig& cfg) {
  if (n_frames < 1) throw Error(ErrorCode::InvalidConfig, "n_frames must be >= 1");
  scene.validate();
  cfg.validate();
  Simulation sim;
  sim.frames.resize(static_cast<std::size_t>(n_frames));
  sim.truth.labels.resize(static_cast<std::size_t>(n_frames));
  io::parallel_for(static_cast<std::size_t>(n_frames), [&](std::size_t k) {
    auto rendered = raycast(scene, static_cast<std::int64_t>(k), cfg);
    sim.frames[k] = std::move(rendered.frame);
    sim.truth.labels[k] = std::move(rendered.labels);
  });

  for (const auto& v : scene.vehicles) {
    tracking::Trajectory traj;
    traj.track_id = v.id;
    for (int k = 0; k < n_frames; ++k) {
      const auto pose = vehicle_pose(v, k / cfg.frame_rate);
      if (!pose) continue;
      traj.points.push_back({k, pose->x, pose->y, pose->vx, pose->vy, tracking::TrackStatus::Confirmed});
    }
    if (!traj.points.empty()) sim.truth.trajectories.push_back(std::move(traj));
  }
  return sim;
}

std::string write_labels_csv(std::span<const PolarFrame> frames, std::span<const std::vector<std::int32_t>> labels) {
  if (frames.size() != labels.size()) throw Error(ErrorCode::ShapeMismatch, "label/frame count differ");
  std::string out = kLabelsCsvHeader;
  out += '\n';
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    const auto id = std::to_string(frame.frame_id);
    for (int beam = 0; beam < frame.beam_count; ++beam) {
      for (int bin = 0; bin < frame.azimuth_bins; ++bin) {
        const auto label = labels[f][frame.index(beam, bin)];
        if (label == kLabelNonReturn) continue;
        out += id + ',' + std::to_string(beam) + ',' + std::to_string(bin) + ',' +
               (label == kLabelBackground ? "background" : "vehicle") + ',' +
               std::to_string(label == kLabelBackground ? -1 : label) + '\n';
      }
    }
  }
  return out;
}

std::vector<std::vector<std::int32_t>> read_labels_csv(const std::string& contents,
                                                       std::span<const PolarFrame> frames) {
  std::map<std::int64_t, std::size_t> slot;
  std::vector<std::vector<std::int32_t>> labels(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    slot[frames[f].frame_id] = f;
    labels[f].assign(frames[f].range.size(), kLabelNonReturn);
  }
  io::CsvReader reader(contents, kLabelsCsvHeader);
  std::vector<std::string_view> fields;
  while (reader.next(fields)) {
    const auto line = reader.line_number();
    if (fields.size() != 5) throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": expected 5 fields");
    const auto it = slot.find(io::parse_int(fields[0], line));
    if (it == slot.end()) continue;
    const auto& frame = frames[it->second];
    const auto beam = io::parse_int(fields[1], line);
    const auto bin = io::parse_int(fields[2], line);
    if (beam < 0 || beam >= frame.beam_count || bin < 0 || bin >= frame.azimuth_bins) {
      throw Error(ErrorCode::ShapeMismatch, "line " + std::to_string(line) + ": cell outside frame grid");
    }
    std::int32_t label = kLabelBackground;
    if (fields[3] == "vehicle") {
      label = static_cast<std::int32_t>(io::parse_int(fields[4], line));
    } else if (fields[3] != "background") {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": unknown label");
    }
    labels[it->second][frame.index(static_cast<int>(beam), static_cast<int>(bin))] = label;
  }
  return labels;
}

}  // namespace polarbg::sim

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "polarbg/frames.hpp"
#include "polarbg/sim.hpp"

namespace testsupport {

inline polarbg::SensorConfig sensor(int beams, int bins = 1800) {
  polarbg::SensorConfig cfg;
  cfg.beam_count = beams;
  for (int b = 0; b < beams; ++b) cfg.elevations.push_back(-10.0 + b);
  cfg.azimuth_bins = bins;
  cfg.azimuth_resolution = 360.0 / bins;
  return cfg;
}

inline std::vector<double> normal_samples(std::mt19937_64& rng, double mean, double sd, std::size_t n) {
  std::normal_distribution<double> dist(mean, sd);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

// Sixteen beams at 0.4 degree bins, pointing down onto the road.
inline polarbg::SensorConfig road_sensor() {
  polarbg::SensorConfig cfg;
  cfg.elevations = {-15, -10, -7, -5, -4, -3.5, -3, -2.5, -2, -1.6, -1.2, -0.8, -0.4, 0, 1, 3};
  cfg.beam_count = static_cast<int>(cfg.elevations.size());
  cfg.azimuth_bins = 900;
  cfg.azimuth_resolution = 0.4;
  return cfg;
}

// Ground plus one building; vehicles drive along y = lane at `speed` m/s from x = -30.
inline polarbg::sim::Scene road_scene(std::vector<double> lanes, double speed = 10.0, double start = 0.0) {
  polarbg::sim::Scene scene;
  scene.surfaces.push_back({{20, 20, -1.7}, {30, 30, 6}, 60.0});
  int id = 0;
  for (double lane : lanes) {
    polarbg::sim::Vehicle v;
    v.id = id++;
    v.path = {{start, -30.0, lane, 0.0}, {start + 60.0 / speed, 30.0, lane, 0.0}};
    scene.vehicles.push_back(v);
  }
  return scene;
}

}  // namespace testsupport

#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polarbg/cfta.hpp"
#include "polarbg/dmd.hpp"
#include "polarbg/frames.hpp"

namespace polarbg {

struct BeamBackground {
  int beam = 0;
  int rank = 0;
  bool median_fallback = false;
  std::vector<double> background;  // one intensity per azimuth bin
  std::vector<std::complex<double>> eigenvalues;
};

/// Trained background: DMD intensity vectors per beam plus CFTA range thresholds.
struct BackgroundModel {
  std::string sensor_hash;
  SensorConfig sensor;
  dmd::DMDConfig dmd;
  std::int64_t first_frame = 0;
  std::int64_t last_frame = 0;
  std::int64_t frame_count = 0;
  std::vector<BeamBackground> beams;
  cfta::ThresholdTable thresholds;
};

BackgroundModel train_background_model(std::span<const PolarFrame> frames, const SensorConfig& sensor,
                                       const dmd::DMDConfig& cfg);

/// Throws ModelMismatch when the model was trained for a different sensor.
void check_compatible(const BackgroundModel& model, const SensorConfig& sensor);

nlohmann::json model_to_json(const BackgroundModel& model);
BackgroundModel model_from_json(const nlohmann::json& j);

}  // namespace polarbg

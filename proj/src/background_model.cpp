#include "polarbg/background_model.hpp"

#include <algorithm>

#include "polarbg/error.hpp"
#include "polarbg/io.hpp"

namespace polarbg {

BackgroundModel train_background_model(std::span<const PolarFrame> frames, const SensorConfig& sensor,
                                       const dmd::DMDConfig& cfg) {
  sensor.validate();
  cfg.validate();
  if (frames.size() < 2) throw Error(ErrorCode::TooFewFrames, "training needs at least 2 frames");
  for (const auto& f : frames) {
    if (f.beam_count != sensor.beam_count || f.azimuth_bins != sensor.azimuth_bins) {
      throw Error(ErrorCode::ShapeMismatch, "frame shape differs from sensor config");
    }
  }

  BackgroundModel model;
  model.sensor = sensor;
  model.sensor_hash = sensor_hash(sensor);
  model.dmd = cfg;
  model.frame_count = static_cast<std::int64_t>(frames.size());
  auto [lo, hi] = std::minmax_element(frames.begin(), frames.end(), [](const auto& a, const auto& b) {
    return a.frame_id < b.frame_id;
  });
  model.first_frame = lo->frame_id;
  model.last_frame = hi->frame_id;

  model.beams.resize(static_cast<std::size_t>(sensor.beam_count));
  io::parallel_for(model.beams.size(), [&](std::size_t beam) {
    const auto fitted = dmd::train_intensity_model(frames, static_cast<int>(beam), cfg);
    auto& out = model.beams[beam];
    out.beam = static_cast<int>(beam);
    out.rank = fitted.rank;
    out.median_fallback = fitted.median_fallback;
    out.background.assign(fitted.background.data(), fitted.background.data() + fitted.background.size());
    out.eigenvalues.assign(fitted.eigenvalues.data(), fitted.eigenvalues.data() + fitted.eigenvalues.size());
  });
  model.thresholds = cfta::learn_thresholds(frames, sensor);
  return model;
}

void check_compatible(const BackgroundModel& model, const SensorConfig& sensor) {
  const auto expected = sensor_hash(sensor);
  if (model.sensor_hash != expected) {
    throw Error(ErrorCode::ModelMismatch,
                "model sensor hash " + model.sensor_hash + " does not match config hash " + expected);
  }
}

nlohmann::json model_to_json(const BackgroundModel& model) {
  nlohmann::json beams = nlohmann::json::array();
  for (const auto& b : model.beams) {
    nlohmann::json eig = nlohmann::json::array();
    for (const auto& l : b.eigenvalues) eig.push_back({l.real(), l.imag()});
    beams.push_back({{"beam", b.beam},
                     {"rank", b.rank},
                     {"median_fallback", b.median_fallback},
                     {"background", b.background},
                     {"eigenvalues", eig}});
  }
  nlohmann::json provenance = nlohmann::json::array();
  for (auto p : model.thresholds.provenance) provenance.push_back(std::string(1, static_cast<char>(p)));

  return {{"sensor_hash", model.sensor_hash},
          {"sensor", model.sensor},
          {"dmd", model.dmd},
          {"training", {{"first_frame", model.first_frame},
                        {"last_frame", model.last_frame},
                        {"frame_count", model.frame_count}}},
          {"beams", beams},
          {"range_thresholds", model.thresholds.thresholds},
          {"range_provenance", provenance}};
}

BackgroundModel model_from_json(const nlohmann::json& j) {
  try {
    BackgroundModel model;
    model.sensor_hash = j.at("sensor_hash").get<std::string>();
    model.sensor = j.at("sensor").get<SensorConfig>();
    model.dmd = j.at("dmd").get<dmd::DMDConfig>();
    const auto& training = j.at("training");
    model.first_frame = training.at("first_frame").get<std::int64_t>();
    model.last_frame = training.at("last_frame").get<std::int64_t>();
    model.frame_count = training.at("frame_count").get<std::int64_t>();
    if (model.sensor_hash != sensor_hash(model.sensor)) {
      throw Error(ErrorCode::ModelMismatch, "embedded sensor does not match embedded hash");
    }

    const auto bins = static_cast<std::size_t>(model.sensor.azimuth_bins);
    for (const auto& jb : j.at("beams")) {
      BeamBackground b;
      b.beam = jb.at("beam").get<int>();
      b.rank = jb.at("rank").get<int>();
      b.median_fallback = jb.at("median_fallback").get<bool>();
      b.background = jb.at("background").get<std::vector<double>>();
      for (const auto& e : jb.at("eigenvalues")) {
        b.eigenvalues.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
      }
      if (b.background.size() != bins) throw Error(ErrorCode::ShapeMismatch, "background length");
      model.beams.push_back(std::move(b));
    }
    if (model.beams.size() != static_cast<std::size_t>(model.sensor.beam_count)) {
      throw Error(ErrorCode::ShapeMismatch, "beam count differs from sensor");
    }

    auto& table = model.thresholds;
    table.beam_count = model.sensor.beam_count;
    table.azimuth_bins = model.sensor.azimuth_bins;
    table.thresholds = j.at("range_thresholds").get<std::vector<double>>();
    for (const auto& code : j.at("range_provenance")) {
      const auto s = code.get<std::string>();
      if (s == "T") table.provenance.push_back(cfta::Provenance::Triangle);
      else if (s == "N") table.provenance.push_back(cfta::Provenance::NonReturnMajority);
      else if (s == "I") table.provenance.push_back(cfta::Provenance::Insufficient);
      else throw Error(ErrorCode::ParseError, "unknown provenance code '" + s + "'");
    }
    if (table.thresholds.size() != model.sensor.cell_count() ||
        table.provenance.size() != model.sensor.cell_count()) {
      throw Error(ErrorCode::ShapeMismatch, "threshold table size differs from sensor grid");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
  }
}

}  // namespace polarbg

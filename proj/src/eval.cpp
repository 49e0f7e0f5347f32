#include "polarbg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "polarbg/error.hpp"
#include "polarbg/io.hpp"

namespace polarbg::eval {

namespace {

nlohmann::json ratio_json(const std::optional<double>& v) {
  if (!v) return "undefined";
  return *v;
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", *v * 100.0);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

MovementRow make_row(std::string entry, std::string exit, int predicted, int truth) {
  MovementRow row{std::move(entry), std::move(exit), predicted, truth, std::nullopt, std::nullopt};
  if (truth > 0) {
    row.error_rate = std::abs(predicted - truth) / static_cast<double>(truth);
    row.accuracy = 1.0 - *row.error_rate;
  }
  return row;
}

}  // namespace

std::optional<double> safe_ratio(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall) {
  if (!precision || !recall) return std::nullopt;
  return safe_ratio(2.0 * *precision * *recall, *precision + *recall);
}

std::optional<double> BandMetrics::precision() const {
  return safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
}

std::optional<double> BandMetrics::recall() const {
  return safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
}

std::optional<double> BandMetrics::f1() const { return f1_score(precision(), recall()); }

std::vector<std::vector<std::uint8_t>> cells_to_masks(std::span<const pipeline::ForegroundCell> cells,
                                                      std::span<const PolarFrame> frames, bool clustered_only) {
  std::map<std::int64_t, std::size_t> slot;
  std::vector<std::vector<std::uint8_t>> masks(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    slot[frames[f].frame_id] = f;
    masks[f].assign(frames[f].range.size(), 0);
  }
  for (const auto& c : cells) {
    if (clustered_only && c.det_id < 0) continue;
    const auto it = slot.find(c.frame);
    if (it == slot.end()) continue;
    const auto& frame = frames[it->second];
    if (c.beam < 0 || c.beam >= frame.beam_count || c.bin < 0 || c.bin >= frame.azimuth_bins) {
      throw Error(ErrorCode::ShapeMismatch, "foreground cell outside frame grid");
    }
    masks[it->second][frame.index(c.beam, c.bin)] = 1;
  }
  return masks;
}

PointMetrics point_metrics(std::span<const std::vector<std::uint8_t>> predicted,
                           std::span<const std::vector<std::int32_t>> truth, std::span<const PolarFrame> frames) {
  if (predicted.size() != frames.size() || truth.size() != frames.size()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction, truth and frame counts differ");
  }
  PointMetrics m;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    if (predicted[f].size() != frame.range.size() || truth[f].size() != frame.range.size()) {
      throw Error(ErrorCode::ShapeMismatch, "grid size mismatch in frame " + std::to_string(frame.frame_id));
    }
    for (std::size_t c = 0; c < frame.range.size(); ++c) {
      const double r = frame.range[c];
      const auto label = truth[f][c];
      const bool pred = predicted[f][c] != 0;
      const bool vehicle = label >= 0;
      if (label < -1) continue;  // non-return
      for (auto& band : m.bands) {
        if (r < band.lo || r >= band.hi) continue;
        if (pred && vehicle) ++band.tp;
        else if (pred) ++band.fp;
        else if (vehicle) ++band.fn;
      }
    }
  }
  return m;
}

CountMetrics count_metrics(const tracking::MovementCounts& predicted, const tracking::MovementCounts& truth) {
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& [k, v] : predicted.counts) keys.insert(k);
  for (const auto& [k, v] : truth.counts) keys.insert(k);
  CountMetrics m;
  int total_pred = 0;
  int total_truth = 0;
  for (const auto& key : keys) {
    const auto p = predicted.counts.count(key) ? predicted.counts.at(key) : 0;
    const auto t = truth.counts.count(key) ? truth.counts.at(key) : 0;
    m.rows.push_back(make_row(key.first, key.second, p, t));
    total_pred += p;
    total_truth += t;
  }
  m.total = make_row("total", "total", total_pred, total_truth);
  return m;
}

const StageStat& TimingReport::stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::InvalidConfig, "no timing stage " + name);
}

TimingReport timing_report(std::span<const pipeline::StageTimes> times, std::span<const double> track_ms) {
  if (times.size() < 10) throw Error(ErrorCode::InvalidConfig, "timing needs at least 10 frames");
  if (!track_ms.empty() && track_ms.size() != times.size()) {
    throw Error(ErrorCode::ShapeMismatch, "track timings must match frame count");
  }
  const std::array<std::string, 7> names = {"mask", "fuse", "project", "denoise", "cluster", "track", "total"};
  TimingReport report;
  report.frames = static_cast<int>(times.size());
  for (const auto& name : names) report.stages.push_back({name, 0.0, 0.0});
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto& t = times[i];
    const double track = track_ms.empty() ? 0.0 : track_ms[i];
    const std::array<double, 7> values = {t.mask_ms,    t.fuse_ms, t.project_ms,       t.denoise_ms,
                                          t.cluster_ms, track,     t.total_ms + track};
    for (std::size_t s = 0; s < values.size(); ++s) {
      report.stages[s].mean_ms += values[s];
      report.stages[s].max_ms = std::max(report.stages[s].max_ms, values[s]);
    }
  }
  for (auto& s : report.stages) s.mean_ms /= static_cast<double>(times.size());
  return report;
}

nlohmann::json to_json(const PointMetrics& m) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : m.bands) {
    bands.push_back({{"range_min", b.lo},
                     {"range_max", b.hi},
                     {"tp", b.tp},
                     {"fp", b.fp},
                     {"fn", b.fn},
                     {"precision", ratio_json(b.precision())},
                     {"recall", ratio_json(b.recall())},
                     {"f1", ratio_json(b.f1())}});
  }
  return {{"bands", bands}};
}

nlohmann::json to_json(const CountMetrics& m) {
  auto row_json = [](const MovementRow& r) {
    return nlohmann::json{{"entry", r.entry},
                          {"exit", r.exit},
                          {"predicted", r.predicted},
                          {"truth", r.truth},
                          {"error_rate", ratio_json(r.error_rate)},
                          {"accuracy", ratio_json(r.accuracy)}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : m.rows) rows.push_back(row_json(r));
  auto total = row_json(m.total);
  total.erase("entry");
  total.erase("exit");
  return {{"movements", rows}, {"total", total}};
}

nlohmann::json to_json(const TimingReport& r) {
  nlohmann::json stages = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& s : r.stages) {
    stages[s.name] = {{"mean_ms", s.mean_ms}, {"max_ms", s.max_ms}};
    order.push_back(s.name);
  }
  return {{"frames", r.frames}, {"stages", stages}, {"order", order}};
}

TimingReport timing_from_json(const nlohmann::json& j) {
  try {
    TimingReport r;
    r.frames = j.at("frames").get<int>();
    for (const auto& name : j.at("order")) {
      const auto& s = j.at("stages").at(name.get<std::string>());
      r.stages.push_back({name.get<std::string>(), s.at("mean_ms").get<double>(), s.at("max_ms").get<double>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("timing report: ") + e.what());
  }
}

std::string format_table(const PointMetrics& m) {
  std::string out = pad_right("Range", 14) + pad("TP", 10) + pad("FP", 10) + pad("FN", 10) + pad("Precision", 12) +
                    pad("Recall", 12) + pad("F1", 12) + '\n';
  for (const auto& b : m.bands) {
    const auto label = "[" + io::format_number(b.lo) + ", " + io::format_number(b.hi) + ") m";
    out += pad_right(label, 14) + pad(std::to_string(b.tp), 10) + pad(std::to_string(b.fp), 10) +
           pad(std::to_string(b.fn), 10) + pad(percent(b.precision()), 12) + pad(percent(b.recall()), 12) +
           pad(percent(b.f1()), 12) + '\n';
  }
  return out;
}

std::string format_table(const CountMetrics& m) {
  std::size_t width = 12;
  for (const auto& r : m.rows) width = std::max(width, r.entry.size() + r.exit.size() + 6);
  std::string out = pad_right("Movement", width) + pad("Predicted", 11) + pad("Truth", 9) + pad("Error Rate", 12) +
                    pad("Accuracy", 12) + '\n';
  auto line = [&](const std::string& name, const MovementRow& r) {
    out += pad_right(name, width) + pad(std::to_string(r.predicted), 11) + pad(std::to_string(r.truth), 9) +
           pad(percent(r.error_rate), 12) + pad(percent(r.accuracy), 12) + '\n';
  };
  for (const auto& r : m.rows) line(r.entry + " -> " + r.exit, r);
  line("Total Count", m.total);
  return out;
}

}  // namespace polarbg::eval

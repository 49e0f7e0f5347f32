#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polarbg/frames.hpp"
#include "polarbg/pipeline.hpp"
#include "polarbg/tracking.hpp"

namespace polarbg::eval {

/// 0/0 ratios are empty rather than zero.
std::optional<double> safe_ratio(double num, double den);
std::optional<double> f1_score(std::optional<double> precision, std::optional<double> recall);

struct BandMetrics {
  double lo = 0.0;  // meters, inclusive
  double hi = 0.0;  // meters, exclusive
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::optional<double> precision() const;
  std::optional<double> recall() const;
  std::optional<double> f1() const;
};

struct PointMetrics {
  std::array<BandMetrics, 2> bands{BandMetrics{0.0, 30.0}, BandMetrics{30.0, 100.0}};
};

/// Per-frame foreground masks (nonzero = predicted vehicle) built from foreground rows.
/// Rows whose frame is absent from `frames` are ignored; with clustered_only, rows with
/// det_id < 0 are dropped.
std::vector<std::vector<std::uint8_t>> cells_to_masks(std::span<const pipeline::ForegroundCell> cells,
                                                      std::span<const PolarFrame> frames, bool clustered_only);

/// Cells are banded by their measured range; cells beyond the last band are not scored.
PointMetrics point_metrics(std::span<const std::vector<std::uint8_t>> predicted,
                           std::span<const std::vector<std::int32_t>> truth, std::span<const PolarFrame> frames);

struct MovementRow {
  std::string entry;
  std::string exit;
  int predicted = 0;
  int truth = 0;
  std::optional<double> error_rate;
  std::optional<double> accuracy;
};

struct CountMetrics {
  std::vector<MovementRow> rows;  // sorted by (entry, exit)
  MovementRow total;
};

/// Movements missing from one side count as zero there.
CountMetrics count_metrics(const tracking::MovementCounts& predicted, const tracking::MovementCounts& truth);

struct StageStat {
  std::string name;
  double mean_ms = 0.0;
  double max_ms = 0.0;
};

struct TimingReport {
  int frames = 0;
  std::vector<StageStat> stages;  // mask, fuse, project, denoise, cluster, track, total

  const StageStat& stage(const std::string& name) const;
};

/// Requires at least 10 frames. `track_ms` is empty or one entry per frame.
TimingReport timing_report(std::span<const pipeline::StageTimes> times, std::span<const double> track_ms);

nlohmann::json to_json(const PointMetrics& m);
nlohmann::json to_json(const CountMetrics& m);
nlohmann::json to_json(const TimingReport& r);
TimingReport timing_from_json(const nlohmann::json& j);

std::string format_table(const PointMetrics& m);
std::string format_table(const CountMetrics& m);

}  // namespace polarbg::eval

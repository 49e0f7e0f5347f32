#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "polarbg/frames.hpp"

namespace polarbg::cfta {

inline constexpr int kCoarseBins = 200;
inline constexpr int kFineBins = 100;
inline constexpr std::size_t kMinSamples = 30;

struct RangeHistogram {
  std::vector<double> edges;         // B + 1 ascending
  std::vector<std::int64_t> counts;  // B
  double bin_size = 0.0;

  std::size_t bins() const { return counts.size(); }
};

/// Uniform histogram over [lo, hi]; the top edge is inclusive and values are clamped in.
RangeHistogram make_histogram(std::span<const double> samples, double lo, double hi, int bins);

struct UnitSamples {
  std::vector<double> samples;  // positive ranges
  std::int64_t non_returns = 0;
};

UnitSamples collect_unit_ranges(std::span<const PolarFrame> frames, int beam, int bin);

/// Drops samples above the upper edge of the tallest coarse bin plus twice the
/// standard deviation of the samples inside that bin.
std::vector<double> coarse_step(std::span<const double> samples, double max_range);

/// kFineBins bins on [0, max(filtered)].
RangeHistogram fine_histogram(std::span<const double> filtered);

/// Lower edge of the bin farthest from the line joining (0, 0) and the peak.
double triangle_threshold(const RangeHistogram& hist);

enum class Provenance : char { Triangle = 'T', NonReturnMajority = 'N', Insufficient = 'I' };

struct UnitThreshold {
  double threshold = 0.0;
  Provenance provenance = Provenance::Insufficient;
};

UnitThreshold cfta_unit(std::span<const double> samples, std::int64_t non_returns,
                        const SensorConfig& cfg);

struct ThresholdTable {
  int beam_count = 0;
  int azimuth_bins = 0;
  std::vector<double> thresholds;  // row-major by beam
  std::vector<Provenance> provenance;

  double at(int beam, int bin) const {
    return thresholds[static_cast<std::size_t>(beam) * static_cast<std::size_t>(azimuth_bins) +
                      static_cast<std::size_t>(bin)];
  }
};

ThresholdTable learn_thresholds(std::span<const PolarFrame> frames, const SensorConfig& cfg);

/// mask = 0 < range < threshold; a range equal to the threshold is background.
std::vector<std::uint8_t> range_foreground_mask(const PolarFrame& frame, const ThresholdTable& table);

}  // namespace polarbg::cfta

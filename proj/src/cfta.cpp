#include "polarbg/cfta.hpp"

#include <algorithm>
#include <cmath>

#include "polarbg/error.hpp"
#include "polarbg/io.hpp"

namespace polarbg::cfta {

namespace {

int bin_of(double value, double lo, double hi, int bins) {
  const double scaled = (value - lo) * bins / (hi - lo);
  if (!(scaled > 0.0)) return 0;
  return std::min(static_cast<int>(std::floor(scaled)), bins - 1);
}

}  // namespace

RangeHistogram make_histogram(std::span<const double> samples, double lo, double hi, int bins) {
  RangeHistogram h;
  h.bin_size = (hi - lo) / bins;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double s : samples) ++h.counts[static_cast<std::size_t>(bin_of(s, lo, hi, bins))];
  return h;
}

UnitSamples collect_unit_ranges(std::span<const PolarFrame> frames, int beam, int bin) {
  UnitSamples out;
  out.samples.reserve(frames.size());
  for (const auto& f : frames) {
    const double r = f.range[f.index(beam, bin)];
    if (r > 0.0) {
      out.samples.push_back(r);
    } else {
      ++out.non_returns;
    }
  }
  return out;
}

std::vector<double> coarse_step(std::span<const double> samples, double max_range) {
  if (samples.empty()) throw Error(ErrorCode::EmptySamples, "coarse step needs samples");
  const auto hist = make_histogram(samples, 0.0, max_range, kCoarseBins);

  // Ties go to the farther bin: background is the farthest return.
  std::size_t peak = 0;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    if (hist.counts[i] >= hist.counts[peak]) peak = i;
  }
  const double upper_edge = hist.edges[peak + 1];

  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (double s : samples) {
    if (static_cast<std::size_t>(bin_of(s, 0.0, max_range, kCoarseBins)) != peak) continue;
    sum += s;
    ++n;
  }
  const double mean = sum / static_cast<double>(n);
  for (double s : samples) {
    if (static_cast<std::size_t>(bin_of(s, 0.0, max_range, kCoarseBins)) != peak) continue;
    sum_sq += (s - mean) * (s - mean);
  }
  const double sigma = std::sqrt(sum_sq / static_cast<double>(n));

  const double cutoff = upper_edge + 2.0 * sigma;
  std::vector<double> kept;
  kept.reserve(samples.size());
  for (double s : samples) {
    if (s <= cutoff) kept.push_back(s);
  }
  return kept;
}

RangeHistogram fine_histogram(std::span<const double> filtered) {
  if (filtered.empty()) throw Error(ErrorCode::EmptySamples, "fine step needs samples");
  const double r_max = *std::max_element(filtered.begin(), filtered.end());
  if (!(r_max > 0.0)) throw Error(ErrorCode::EmptySamples, "fine step needs a positive range");
  return make_histogram(filtered, 0.0, r_max, kFineBins);
}

double triangle_threshold(const RangeHistogram& hist) {
  std::size_t peak = 0;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    if (hist.counts[i] >= hist.counts[peak]) peak = i;
  }
  if (hist.counts.empty() || hist.counts[peak] == 0) {
    throw Error(ErrorCode::EmptyHistogram, "histogram has no counts");
  }

  // Distance to the line through (0, 0) and (peak, h) is |h*i - peak*c_i| / norm;
  // the norm is common to all bins, so the numerator ranks them.
  const double h = static_cast<double>(hist.counts[peak]);
  const double p = static_cast<double>(peak);
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i <= peak; ++i) {
    const double d = std::abs(h * static_cast<double>(i) - p * static_cast<double>(hist.counts[i]));
    if (d >= best_d) {
      best_d = d;
      best = i;
    }
  }
  return hist.edges[best];
}

UnitThreshold cfta_unit(std::span<const double> samples, std::int64_t non_returns,
                        const SensorConfig& cfg) {
  if (non_returns > static_cast<std::int64_t>(samples.size())) {
    return {cfg.max_range, Provenance::NonReturnMajority};
  }
  if (samples.size() < kMinSamples) return {cfg.max_range, Provenance::Insufficient};
  const auto filtered = coarse_step(samples, cfg.max_range);
  const auto hist = fine_histogram(filtered);
  return {triangle_threshold(hist), Provenance::Triangle};
}

ThresholdTable learn_thresholds(std::span<const PolarFrame> frames, const SensorConfig& cfg) {
  if (frames.empty()) throw Error(ErrorCode::TooFewFrames, "threshold learning needs frames");
  for (const auto& f : frames) {
    if (f.beam_count != cfg.beam_count || f.azimuth_bins != cfg.azimuth_bins) {
      throw Error(ErrorCode::ShapeMismatch, "frame shape differs from sensor config");
    }
  }
  ThresholdTable table;
  table.beam_count = cfg.beam_count;
  table.azimuth_bins = cfg.azimuth_bins;
  table.thresholds.assign(cfg.cell_count(), cfg.max_range);
  table.provenance.assign(cfg.cell_count(), Provenance::Insufficient);
  io::parallel_for(static_cast<std::size_t>(cfg.beam_count), [&](std::size_t beam) {
    for (int bin = 0; bin < cfg.azimuth_bins; ++bin) {
      const auto unit = collect_unit_ranges(frames, static_cast<int>(beam), bin);
      const auto result = cfta_unit(unit.samples, unit.non_returns, cfg);
      const auto cell = beam * static_cast<std::size_t>(cfg.azimuth_bins) + static_cast<std::size_t>(bin);
      table.thresholds[cell] = result.threshold;
      table.provenance[cell] = result.provenance;
    }
  });
  return table;
}

std::vector<std::uint8_t> range_foreground_mask(const PolarFrame& frame, const ThresholdTable& table) {
  if (frame.beam_count != table.beam_count || frame.azimuth_bins != table.azimuth_bins) {
    throw Error(ErrorCode::ShapeMismatch, "frame and threshold table differ in shape");
  }
  std::vector<std::uint8_t> mask(frame.range.size(), 0);
  for (std::size_t c = 0; c < mask.size(); ++c) {
    const double r = frame.range[c];
    mask[c] = r > 0.0 && r < table.thresholds[c];
  }
  return mask;
}

}  // namespace polarbg::cfta

#pragma once

#include <array>
#include <span>
#include <string>

#include "polarbg/background_model.hpp"
#include "polarbg/cfta.hpp"
#include "polarbg/tracking.hpp"

namespace polarbg::plot {

/// Plain (P2) grayscale image of a matrix, rows top to bottom, values clamped to [lo, hi].
std::string pgm(const Eigen::MatrixXd& values, double lo, double hi);

/// Intensity ST map of one beam: observed, background and |observed - background|.
std::array<std::string, 3> stmap_triptych(std::span<const PolarFrame> frames, const BackgroundModel& model, int beam);

/// Trajectory polylines in the x-y plane, coloured by movement, over the zone outlines.
std::string trajectories_svg(std::span<const tracking::Trajectory> trajectories, const tracking::MovementZones& zones);

/// Histogram bars with the triangle line from the origin to the peak and the threshold marker.
std::string histogram_svg(const cfta::RangeHistogram& hist, double threshold);

}  // namespace polarbg::plot

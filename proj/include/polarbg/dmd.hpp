#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "polarbg/frames.hpp"

namespace polarbg::dmd {

struct DMDConfig {
  double svd_energy = 0.9999;         // cumulative squared singular value energy kept
  double eigen_tol = 0.01;            // |lambda - 1| bound for a static mode
  double intensity_threshold = 10.0;  // foreground deviation, intensity units

  void validate() const;
};

void to_json(nlohmann::json& j, const DMDConfig& cfg);
void from_json(const nlohmann::json& j, DMDConfig& cfg);

/// Snapshot pair: `left` holds columns 0..m-2, `right` columns 1..m-1.
struct ShiftPair {
  Eigen::MatrixXd left;
  Eigen::MatrixXd right;
};

ShiftPair shift_split(const Eigen::MatrixXd& snapshots);

/// Rank-r projection of the frame-advance operator onto the leading left singular vectors.
struct ReducedOperator {
  Eigen::MatrixXd u;      // n x r
  Eigen::VectorXd sigma;  // r
  Eigen::MatrixXd v;      // (m-1) x r
  Eigen::MatrixXd atilde; // r x r

  Eigen::Index rank() const { return sigma.size(); }
};

/// Singular values below 1e-12 * sigma_1 are always dropped; of the rest, the smallest
/// prefix reaching `svd_energy` of the squared sum is kept.
ReducedOperator fit_reduced_operator(const Eigen::MatrixXd& left, const Eigen::MatrixXd& right,
                                     double svd_energy);

struct Modes {
  Eigen::MatrixXcd phi;     // n x r, unit-norm columns
  Eigen::VectorXcd lambda;  // r
};

/// Exact DMD modes: phi = right * V * Sigma^-1 * W, where atilde W = W Lambda.
Modes eig_modes(const ReducedOperator& op, const Eigen::MatrixXd& right);

/// Least-squares fit of mode amplitudes to the first snapshot.
Eigen::VectorXcd amplitudes(const Eigen::MatrixXcd& phi, const Eigen::VectorXd& first);

struct StaticBackground {
  Eigen::VectorXd vector;
  std::vector<int> indices;
};

/// Sums the modes with |lambda - 1| <= eigen_tol. Throws NoStaticMode when there are none.
StaticBackground background_vector(const Eigen::MatrixXcd& phi, const Eigen::VectorXcd& lambda,
                                   const Eigen::VectorXcd& b, double eigen_tol);

struct DMDModel {
  int beam = 0;
  Eigen::MatrixXcd modes;
  Eigen::VectorXcd eigenvalues;
  Eigen::VectorXcd amplitudes;
  int rank = 0;
  std::vector<int> background_indices;
  Eigen::VectorXd background;
  bool median_fallback = false;  // no static mode, background is the per-bin median
};

/// Evaluates sum_j b_j phi_j lambda_j^(t-1) over `mode_set`; t is 1-based.
Eigen::VectorXcd reconstruct(const DMDModel& model, int t, std::span<const int> mode_set);
Eigen::VectorXcd reconstruct(const DMDModel& model, int t);

/// Per-row median across columns.
Eigen::VectorXd temporal_median(const Eigen::MatrixXd& snapshots);

/// Fits one beam's intensity model from an intensity snapshot matrix (bins x frames).
DMDModel train_from_snapshots(const Eigen::MatrixXd& snapshots, int beam, const DMDConfig& cfg);

DMDModel train_intensity_model(std::span<const PolarFrame> frames, int beam, const DMDConfig& cfg);

/// mask[a] = |intensity[a] - background[a]| > tau && range[a] > 0.
std::vector<std::uint8_t> intensity_foreground_mask(std::span<const double> intensity,
                                                    std::span<const double> range,
                                                    std::span<const double> background,
                                                    double tau);

}  // namespace polarbg::dmd

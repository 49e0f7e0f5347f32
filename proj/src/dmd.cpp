#include "polarbg/dmd.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "polarbg/error.hpp"

namespace polarbg::dmd {

void DMDConfig::validate() const {
  if (!(svd_energy > 0.0 && svd_energy <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "svd_energy must be in (0, 1]");
  }
  if (!(eigen_tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "eigen_tol must be positive");
  if (!(intensity_threshold >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "intensity_threshold must be non-negative");
  }
}

void to_json(nlohmann::json& j, const DMDConfig& cfg) {
  j = nlohmann::json{{"svd_energy", cfg.svd_energy},
                     {"eigen_tol", cfg.eigen_tol},
                     {"intensity_threshold", cfg.intensity_threshold}};
}

void from_json(const nlohmann::json& j, DMDConfig& cfg) {
  cfg = DMDConfig{};
  cfg.svd_energy = j.value("svd_energy", cfg.svd_energy);
  cfg.eigen_tol = j.value("eigen_tol", cfg.eigen_tol);
  cfg.intensity_threshold = j.value("intensity_threshold", cfg.intensity_threshold);
  cfg.validate();
}

ShiftPair shift_split(const Eigen::MatrixXd& snapshots) {
  const auto m = snapshots.cols();
  if (m < 2) throw Error(ErrorCode::TooFewFrames, "need at least 2 snapshots, got " + std::to_string(m));
  return {snapshots.leftCols(m - 1), snapshots.rightCols(m - 1)};
}

ReducedOperator fit_reduced_operator(const Eigen::MatrixXd& left, const Eigen::MatrixXd& right,
                                     double svd_energy) {
  if (left.rows() != right.rows() || left.cols() != right.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "snapshot matrices differ in shape");
  }
  if (left.size() == 0 || left.isZero(0.0)) {
    throw Error(ErrorCode::DegenerateMatrix, "left snapshot matrix is all zero");
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(left, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (!s.allFinite()) throw Error(ErrorCode::NumericalFailure, "SVD produced non-finite values");

  const double floor = 1e-12 * s(0);
  Eigen::Index usable = 0;
  while (usable < s.size() && s(usable) > floor) ++usable;
  const double total = s.head(usable).squaredNorm();
  Eigen::Index r = 0;
  double cumulative = 0.0;
  while (r < usable) {
    cumulative += s(r) * s(r);
    ++r;
    if (cumulative >= svd_energy * total) break;
  }

  ReducedOperator op;
  op.u = svd.matrixU().leftCols(r);
  op.sigma = s.head(r);
  op.v = svd.matrixV().leftCols(r);
  op.atilde = op.u.transpose() * right * op.v * op.sigma.cwiseInverse().asDiagonal();
  return op;
}

Modes eig_modes(const ReducedOperator& op, const Eigen::MatrixXd& right) {
  if (op.atilde.rows() != op.atilde.cols() || op.atilde.rows() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "reduced operator must be square and non-empty");
  }
  Eigen::EigenSolver<Eigen::MatrixXd> eig(op.atilde, true);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalFailure, "eigen decomposition of reduced operator failed");
  }

  const Eigen::MatrixXd projected = right * op.v * op.sigma.cwiseInverse().asDiagonal();
  Modes modes;
  modes.lambda = eig.eigenvalues();
  modes.phi = projected.cast<std::complex<double>>() * eig.eigenvectors();

  // Unit norm, largest entry real positive. Real data keeps conjugate pairs conjugate.
  for (Eigen::Index j = 0; j < modes.phi.cols(); ++j) {
    auto col = modes.phi.col(j);
    const double norm = col.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) continue;
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    const std::complex<double> pivot = col(arg);
    const std::complex<double> phase = pivot / std::abs(pivot);
    col /= phase * norm;
  }
  if (!modes.phi.allFinite() || !modes.lambda.allFinite()) {
    throw Error(ErrorCode::NumericalFailure, "non-finite DMD modes");
  }
  return modes;
}

Eigen::VectorXcd amplitudes(const Eigen::MatrixXcd& phi, const Eigen::VectorXd& first) {
  if (phi.rows() != first.size()) throw Error(ErrorCode::ShapeMismatch, "mode/snapshot length differ");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(phi);
  return cod.solve(first.cast<std::complex<double>>());
}

StaticBackground background_vector(const Eigen::MatrixXcd& phi, const Eigen::VectorXcd& lambda,
                                   const Eigen::VectorXcd& b, double eigen_tol) {
  StaticBackground out;
  Eigen::VectorXcd sum = Eigen::VectorXcd::Zero(phi.rows());
  for (Eigen::Index j = 0; j < lambda.size(); ++j) {
    if (std::abs(lambda(j) - 1.0) <= eigen_tol) {
      out.indices.push_back(static_cast<int>(j));
      sum += b(j) * phi.col(j);
    }
  }
  if (out.indices.empty()) throw Error(ErrorCode::NoStaticMode, "no eigenvalue within tolerance of 1");
  out.vector = sum.real();
  return out;
}

Eigen::VectorXcd reconstruct(const DMDModel& model, int t, std::span<const int> mode_set) {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(model.modes.rows());
  for (int j : mode_set) {
    out += model.amplitudes(j) * std::pow(model.eigenvalues(j), t - 1) * model.modes.col(j);
  }
  return out;
}

Eigen::VectorXcd reconstruct(const DMDModel& model, int t) {
  std::vector<int> all(static_cast<std::size_t>(model.eigenvalues.size()));
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = static_cast<int>(j);
  return reconstruct(model, t, all);
}

Eigen::VectorXd temporal_median(const Eigen::MatrixXd& snapshots) {
  Eigen::VectorXd out(snapshots.rows());
  std::vector<double> row(static_cast<std::size_t>(snapshots.cols()));
  for (Eigen::Index i = 0; i < snapshots.rows(); ++i) {
    for (Eigen::Index j = 0; j < snapshots.cols(); ++j) row[static_cast<std::size_t>(j)] = snapshots(i, j);
    const auto n = row.size();
    const auto mid = row.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(row.begin(), mid, row.end());
    double value = *mid;
    if (n % 2 == 0) value = 0.5 * (value + *std::max_element(row.begin(), mid));
    out(i) = value;
  }
  return out;
}

DMDModel train_from_snapshots(const Eigen::MatrixXd& snapshots, int beam, const DMDConfig& cfg) {
  cfg.validate();
  const auto pair = shift_split(snapshots);

  DMDModel model;
  model.beam = beam;
  try {
    const auto op = fit_reduced_operator(pair.left, pair.right, cfg.svd_energy);
    const auto modes = eig_modes(op, pair.right);
    model.modes = modes.phi;
    model.eigenvalues = modes.lambda;
    model.rank = static_cast<int>(op.rank());
    model.amplitudes = amplitudes(modes.phi, pair.left.col(0));
    auto bg = background_vector(model.modes, model.eigenvalues, model.amplitudes, cfg.eigen_tol);
    model.background = std::move(bg.vector);
    model.background_indices = std::move(bg.indices);
  } catch (const Error& e) {
    // A beam that never returns, or has no static mode, falls back to the median.
    if (e.code() != ErrorCode::NoStaticMode && e.code() != ErrorCode::DegenerateMatrix) throw;
    model.background_indices.clear();
    model.background = temporal_median(snapshots);
    model.median_fallback = true;
  }
  return model;
}

DMDModel train_intensity_model(std::span<const PolarFrame> frames, int beam, const DMDConfig& cfg) {
  const auto st = build_st_matrix(frames, beam, Channel::Intensity);
  return train_from_snapshots(st.data, beam, cfg);
}

std::vector<std::uint8_t> intensity_foreground_mask(std::span<const double> intensity,
                                                    std::span<const double> range,
                                                    std::span<const double> background,
                                                    double tau) {
  if (intensity.size() != background.size() || range.size() != intensity.size()) {
    throw Error(ErrorCode::ShapeMismatch, "mask inputs differ in length");
  }
  std::vector<std::uint8_t> mask(intensity.size(), 0);
  for (std::size_t a = 0; a < intensity.size(); ++a) {
    mask[a] = range[a] > 0.0 && std::abs(intensity[a] - background[a]) > tau;
  }
  return mask;
}

}  // namespace polarbg::dmd

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace lassolab {

/// Noise-normalized squared error eta^-2 ||estimate - x0||^2.
inline double loss_nnse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& x0, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("loss_nnse: eta must be positive");
  if (estimate.size() != x0.size()) throw std::invalid_argument("loss_nnse: length mismatch");
  return (estimate - x0).squaredNorm() / (eta * eta);
}

/// Peak signal-to-noise ratio in dB with peak max|x0_i| and MSE over N
/// entries. Exact recovery yields +infinity.
inline double psnr(const Eigen::VectorXd& estimate, const Eigen::VectorXd& x0) {
  if (estimate.size() != x0.size()) throw std::invalid_argument("psnr: length mismatch");
  const double peak = x0.lpNorm<Eigen::Infinity>();
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: x0 must be nonzero");
  const double err = (estimate - x0).squaredNorm();
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak * static_cast<double>(x0.size()) / err);
}

}  // namespace lassolab

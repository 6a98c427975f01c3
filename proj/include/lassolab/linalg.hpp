#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "lassolab/random.hpp"

namespace lassolab {

/// Upper estimate of ||A||_2^2: Lanczos with full reorthogonalization on
/// A^T A from a fixed seed, returning the top Ritz value plus its residual
/// norm (with a small relative margin on top).
inline double operator_norm_sq(const Eigen::MatrixXd& A, int max_iters = 300, double tol = 1e-10) {
  if (A.size() == 0) return 0.0;
  const Eigen::Index n = A.cols();
  const int kmax = static_cast<int>(std::min<Eigen::Index>(n, max_iters));
  Engine engine = make_engine(0x5eed, Stream::power_iteration);
  Eigen::MatrixXd Q(n, kmax);
  Q.col(0) = standard_normal_vector(n, engine).normalized();
  std::vector<double> alpha, beta;
  double bound = 0.0;
  for (int j = 0; j < kmax; ++j) {
    Eigen::VectorXd w = A.transpose() * (A * Q.col(j));
    alpha.push_back(Q.col(j).dot(w));
    for (int pass = 0; pass < 2; ++pass) w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    const double b = w.norm();
    const int k = j + 1;
    const Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), k);
    const Eigen::VectorXd sub = Eigen::Map<const Eigen::VectorXd>(beta.data(), k - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    eig.computeFromTridiagonal(diag, sub);
    const double theta = eig.eigenvalues()[k - 1];
    const double residual = b * std::abs(eig.eigenvectors()(k - 1, k - 1));
    bound = theta + residual;
    if (theta <= 0.0) return 0.0;
    if (residual <= tol * theta || b <= 1e-14 * theta || k == kmax) break;
    beta.push_back(b);
    Q.col(j + 1) = w / b;
  }
  return bound * (1.0 + 1e-9);
}

}  // namespace lassolab

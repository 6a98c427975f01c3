#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the iterative solvers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline void for_each_subset(Index n, Index k, const std::function<bool(const std::vector<Index>&)>& fn) {
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (;;) {
    if (fn(idx)) return;
    Index pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
    if (pos < 0) return;
    ++idx[static_cast<std::size_t>(pos)];
    for (Index q = pos + 1; q < k; ++q)
      idx[static_cast<std::size_t>(q)] = idx[static_cast<std::size_t>(q - 1)] + 1;
  }
}

/// Exact lasso minimizer of 0.5||y - Ax||^2 + lambda||x||_1 by enumerating
/// supports in increasing size and all sign patterns on each, returning the
/// first candidate satisfying the full KKT conditions to `kkt_tol`.
inline std::optional<VectorXd> lasso_by_enumeration(const MatrixXd& A, const VectorXd& y,
                                                    double lambda, Index max_support,
                                                    double kkt_tol = 1e-9) {
  const Index N = A.cols();
  const VectorXd Aty = A.transpose() * y;
  if (Aty.lpNorm<Eigen::Infinity>() <= lambda) return VectorXd::Zero(N);
  std::optional<VectorXd> found;
  for (Index k = 1; k <= std::min(max_support, A.rows()) && !found; ++k) {
    for_each_subset(N, k, [&](const std::vector<Index>& S) {
      MatrixXd AS(A.rows(), k);
      for (Index c = 0; c < k; ++c) AS.col(c) = A.col(S[static_cast<std::size_t>(c)]);
      Eigen::LDLT<MatrixXd> ldlt(AS.transpose() * AS);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
      const VectorXd rhs = AS.transpose() * y;
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k); ++mask) {
        VectorXd sgn(k);
        for (Index c = 0; c < k; ++c) sgn[c] = (mask >> c) & 1 ? -1.0 : 1.0;
        const VectorXd xs = ldlt.solve(rhs - lambda * sgn);
        bool consistent = true;
        for (Index c = 0; c < k && consistent; ++c) consistent = xs[c] * sgn[c] > 0.0;
        if (!consistent) continue;
        VectorXd x = VectorXd::Zero(N);
        for (Index c = 0; c < k; ++c) x[S[static_cast<std::size_t>(c)]] = xs[c];
        const VectorXd g = A.transpose() * (y - A * x);
        bool kkt = true;
        for (Index i = 0; i < N && kkt; ++i) {
          if (x[i] != 0.0)
            kkt = std::abs(g[i] - lambda * (x[i] > 0 ? 1.0 : -1.0)) <= kkt_tol;
          else
            kkt = std::abs(g[i]) <= lambda + kkt_tol;
        }
        if (kkt) {
          found = x;
          return true;
        }
      }
      return false;
    });
  }
  return found;
}

inline double lasso_objective(const MatrixXd& A, const VectorXd& y, double lambda, const VectorXd& x) {
  return 0.5 * (y - A * x).squaredNorm() + lambda * x.lpNorm<1>();
}

/// l1-ball projection by bisection on the dual threshold.
inline VectorXd l1_projection_bisection(const VectorXd& v, double tau, double tol = 1e-13) {
  if (v.lpNorm<1>() <= tau) return v;
  auto mass = [&](double theta) {
    double total = 0.0;
    for (Index i = 0; i < v.size(); ++i) total += std::max(std::abs(v[i]) - theta, 0.0);
    return total;
  };
  double lo = 0.0, hi = v.lpNorm<Eigen::Infinity>();
  while (hi - lo > tol * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) > tau ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  VectorXd out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::max(std::abs(v[i]) - theta, 0.0);
    out[i] = v[i] >= 0 ? a : -a;
  }
  return out;
}

inline double sample_mean(const std::vector<double>& xs) {
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace oracle

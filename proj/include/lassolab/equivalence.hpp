#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lassolab/metrics.hpp"
#include "lassolab/model.hpp"
#include "lassolab/parallel.hpp"
#include "lassolab/solvers.hpp"

namespace lassolab {

/// One penalized solve read in all three parameterizations.
struct EquivalenceTriple {
  double lambda = 0.0;
  double tau = 0.0;    // ||x#||_1
  double sigma = 0.0;  // ||y - A x#||_2
  VectorXd estimate;
  double loss = std::numeric_limits<double>::quiet_NaN();
};

inline EquivalenceTriple map_params(const VectorXd& estimate, const VectorXd& y,
                                    const MeasurementMatrix& A, double lambda) {
  EquivalenceTriple t;
  t.lambda = lambda;
  t.estimate = estimate;
  t.tau = estimate.lpNorm<1>();
  t.sigma = (y - A.entries() * estimate).norm();
  return t;
}

/// n log-spaced values on [lo, hi]; with n odd and lo*hi = 1 the middle one is exactly 1.
inline VectorXd log_grid(double lo, double hi, Index n) {
  if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw std::invalid_argument("log_grid: need 0 < lo <= hi, n >= 1");
  VectorXd g(n);
  if (n == 1) {
    g[0] = std::sqrt(lo * hi);
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (Index i = 0; i < n; ++i) g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  if (n % 2 == 1 && std::abs(a + b) < 1e-14) g[n / 2] = 1.0;
  return g;
}

/// Per-cell results of a lambda sweep: rows are grid points, columns are
/// noise realizations.
struct SweepGrid {
  VectorXd rho;
  double lambda_star = 0.0;
  VectorXd lambdas;
  MatrixXd tau, sigma, loss, psnr;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> converged;
  Eigen::MatrixXi iterations;

  Index n() const { return rho.size(); }
  Index k() const { return loss.cols(); }
  Index failures() const { return converged.size() - converged.count(); }
};

struct SweepOptions {
  unsigned workers = 1;
  bool warm_start = true;
  /// Applied to estimate and truth before loss/psnr (e.g. wavelet synthesis).
  std::function<VectorXd(const VectorXd&)> to_signal;
};

namespace detail {

struct CellMetrics {
  double loss;
  double psnr;
};

inline CellMetrics cell_metrics(const VectorXd& estimate, const ProblemInstance& instance,
                                const SweepOptions& options, const VectorXd& truth_signal) {
  if (options.to_signal) {
    const VectorXd xs = options.to_signal(estimate);
    return {loss_nnse(xs, truth_signal, instance.eta), psnr(xs, truth_signal)};
  }
  const VectorXd& x0 = instance.x0.values;
  return {loss_nnse(estimate, x0, instance.eta),
          x0.lpNorm<Eigen::Infinity>() > 0.0 ? psnr(estimate, x0)
                                             : std::numeric_limits<double>::quiet_NaN()};
}

}  // namespace detail

/// Solves (QP) once per cell at lambda_i = rho_i * lambda_star and records
/// loss, tau, sigma. Realizations run in parallel; each walks the path from
/// the largest lambda down, warm-starting from its previous solution, so the
/// result does not depend on the worker count.
inline SweepGrid lambda_sweep(const ProblemInstance& instance, const NoiseBatch& noise,
                              const VectorXd& rho_grid, double lambda_star, const SolverConfig& cfg,
                              const SweepOptions& options = {}) {
  if (rho_grid.size() < 1) throw std::invalid_argument("lambda_sweep: empty rho grid");
  if (!(rho_grid.minCoeff() > 0.0)) throw std::invalid_argument("lambda_sweep: rho must be positive");
  if (!(lambda_star > 0.0)) throw std::invalid_argument("lambda_sweep: lambda_star must be positive");
  for (Index i = 1; i < rho_grid.size(); ++i)
    if (!(rho_grid[i] > rho_grid[i - 1])) throw std::invalid_argument("lambda_sweep: rho grid must be increasing");
  cfg.validate();

  const Index n = rho_grid.size();
  const Index k = static_cast<Index>(noise.k());
  SweepGrid grid;
  grid.rho = rho_grid;
  grid.lambda_star = lambda_star;
  grid.lambdas = rho_grid * lambda_star;
  grid.tau = grid.sigma = grid.loss = grid.psnr = MatrixXd::Zero(n, k);
  grid.converged.setConstant(n, k, false);
  grid.iterations = Eigen::MatrixXi::Zero(n, k);
  const VectorXd truth_signal =
      options.to_signal ? options.to_signal(instance.x0.values) : VectorXd();

  parallel_for(static_cast<std::size_t>(k), options.workers, [&](std::size_t jj) {
    const Index j = static_cast<Index>(jj);
    const VectorXd y = measure(instance, noise.realizations[jj]);
    VectorXd previous;
    for (Index i = n - 1; i >= 0; --i) {
      const double lambda = grid.lambdas[i];
      const VectorXd* warm = options.warm_start && previous.size() > 0 ? &previous : nullptr;
      const SolveReport r = solve_qp(instance.A, y, lambda, cfg, warm);
      const EquivalenceTriple t = map_params(r.estimate, y, instance.A, lambda);
      const auto metrics = detail::cell_metrics(r.estimate, instance, options, truth_signal);
      grid.tau(i, j) = t.tau;
      grid.sigma(i, j) = t.sigma;
      grid.loss(i, j) = metrics.loss;
      grid.psnr(i, j) = metrics.psnr;
      grid.converged(i, j) = r.converged;
      grid.iterations(i, j) = r.iterations;
      previous = r.estimate;
    }
  });
  return grid;
}

struct LambdaStarResult {
  double lambda_star = 0.0;
  double average_loss = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  int evaluations = 0;
};

/// Minimizer of the common-random-numbers average (QP) loss over lambda.
/// A descending log scan from 2 max_j ||A^T y_j||_inf (by half-decades,
/// starting the lower bracket at 1e-4 and extending it while the minimum
/// sits on the edge) is refined by golden-section search in log lambda.
inline LambdaStarResult locate_lambda_star(const ProblemInstance& instance, const NoiseBatch& noise,
                                           const SolverConfig& cfg, unsigned workers = 1,
                                           double rel_tol = 1e-3) {
  const std::size_t k = noise.k();
  std::vector<VectorXd> ys(k);
  double top = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    ys[j] = measure(instance, noise.realizations[j]);
    top = std::max(top, (instance.A.entries().transpose() * ys[j]).lpNorm<Eigen::Infinity>());
  }
  if (!(top > 0.0)) throw std::invalid_argument("locate_lambda_star: all measurements are zero");
  const double hi = 2.0 * top;
  double floor = std::min(1e-4, 0.5 * hi);

  std::vector<VectorXd> warm(k);
  LambdaStarResult result;
  auto average_at = [&](double lambda) {
    std::vector<double> losses(k);
    parallel_for(k, workers, [&](std::size_t j) {
      const VectorXd* w = warm[j].size() > 0 ? &warm[j] : nullptr;
      SolveReport r = solve_qp(instance.A, ys[j], lambda, cfg, w);
      losses[j] = loss_nnse(r.estimate, instance.x0.values, instance.eta);
      warm[j] = std::move(r.estimate);
    });
    ++result.evaluations;
    double total = 0.0;
    for (double l : losses) total += l;
    return total / static_cast<double>(k);
  };

  const double step = std::sqrt(10.0);
  std::vector<double> lams, vals;
  Index best = 0;
  for (double lam = hi;; lam /= step) {
    if (lam < floor) {
      // Minimum on the lower edge: extend the bracket.
      if (static_cast<Index>(lams.size()) - 1 == best && floor > 1e-14 * hi)
        floor /= 100.0;
      else
        break;
    }
    lams.push_back(lam);
    vals.push_back(average_at(lam));
    const Index last = static_cast<Index>(lams.size()) - 1;
    if (vals[static_cast<std::size_t>(last)] < vals[static_cast<std::size_t>(best)]) best = last;
    // Past the minimum and clearly rising: stop scanning.
    if (last - best >= 2 && vals[static_cast<std::size_t>(last)] > 4.0 * vals[static_cast<std::size_t>(best)])
      break;
    if (last - best >= 6) break;
  }

  const std::size_t b = static_cast<std::size_t>(best);
  double a_log = std::log(b + 1 < lams.size() ? lams[b + 1] : lams[b] / step);
  double c_log = std::log(b > 0 ? lams[b - 1] : lams[b]);
  result.bracket_lo = std::exp(a_log);
  result.bracket_hi = std::exp(c_log);

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = c_log - inv_phi * (c_log - a_log);
  double x2 = a_log + inv_phi * (c_log - a_log);
  double f1 = average_at(std::exp(x1));
  double f2 = average_at(std::exp(x2));
  double best_log = std::log(lams[b]);
  double best_val = vals[b];
  while (c_log - a_log > rel_tol) {
    if (f1 < f2) {
      c_log = x2;
      x2 = x1;
      f2 = f1;
      x1 = c_log - inv_phi * (c_log - a_log);
      f1 = average_at(std::exp(x1));
    } else {
      a_log = x1;
      x1 = x2;
      f1 = f2;
      x2 = a_log + inv_phi * (c_log - a_log);
      f2 = average_at(std::exp(x2));
    }
  }
  for (auto [x, f] : {std::pair{x1, f1}, std::pair{x2, f2}}) {
    if (f < best_val) {
      best_val = f;
      best_log = x;
    }
  }
  result.lambda_star = std::exp(best_log);
  result.average_loss = best_val;
  return result;
}

}  // namespace lassolab

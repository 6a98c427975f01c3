#include <gtest/gtest.h>

#include <cmath>

#include "lassolab/equivalence.hpp"
#include "lassolab/metrics.hpp"
#include "lassolab/model.hpp"
#include "lassolab/solvers.hpp"
#include "oracles.hpp"

using namespace lassolab;

namespace {

ProblemInstance small_instance(std::uint64_t seed, Index m = 8, Index N = 20, Index s = 2, double eta = 0.05) {
  return {make_sparse_signal(N, s, 1.0, SupportRule::random(seed)), make_matrix(m, N, Ensemble::gaussian, seed),
          eta, seed};
}

SolverConfig tight() {
  SolverConfig cfg;
  cfg.tol_cert = 1e-10;
  return cfg;
}

}  // namespace

TEST(MapParams, ZeroEstimate) {
  const MeasurementMatrix A = make_matrix(4, 6, Ensemble::gaussian, 1);
  const VectorXd y = make_noise(4, 1, 0);
  const EquivalenceTriple t = map_params(VectorXd::Zero(6), y, A, 0.3);
  EXPECT_EQ(t.tau, 0.0);
  EXPECT_DOUBLE_EQ(t.sigma, y.norm());
  EXPECT_EQ(t.lambda, 0.3);
  EXPECT_TRUE(std::isnan(t.loss));
}

TEST(MapParams, ScalarSoftThreshold) {
  MatrixXd one(1, 1);
  one << 1.0;
  const MeasurementMatrix A = MeasurementMatrix::from_entries(one);
  VectorXd y(1);
  y << 3.0;
  const SolveReport r = solve_qp(A, y, 1.0, SolverConfig{});
  EXPECT_NEAR(r.estimate[0], 2.0, 1e-12);
  const EquivalenceTriple t = map_params(r.estimate, y, A, 1.0);
  EXPECT_NEAR(t.tau, 2.0, 1e-12);
  EXPECT_NEAR(t.sigma, 1.0, 1e-12);
}

TEST(MapParams, CrossSolverConsistency) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ProblemInstance inst = small_instance(seed);
    const VectorXd y = measure(inst, make_noise(8, seed, 0));
    const double lmax = (inst.A.entries().transpose() * y).lpNorm<Eigen::Infinity>();
    for (double f : {0.05, 0.2, 0.6}) {
      const SolveReport q = solve_qp(inst.A, y, f * lmax, tight());
      ASSERT_TRUE(q.converged);
      const EquivalenceTriple t = map_params(q.estimate, y, inst.A, f * lmax);
      const SolveReport l = solve_ls(inst.A, y, t.tau, tight());
      const SolveReport b = solve_bp(inst.A, y, t.sigma, tight());
      EXPECT_LT((l.estimate - q.estimate).norm(), 1e-5) << "seed " << seed << " f " << f;
      EXPECT_LT((b.estimate - q.estimate).norm(), 1e-5) << "seed " << seed << " f " << f;
    }
  }
}

TEST(LogGrid, CentredAtOne) {
  const VectorXd g = log_grid(0.2, 5.0, 301);
  EXPECT_EQ(g[150], 1.0);
  EXPECT_NEAR(g[0], 0.2, 1e-15);
  EXPECT_NEAR(g[300], 5.0, 1e-14);
  for (Index i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
  EXPECT_NEAR(std::log(g[1] / g[0]), std::log(g[300] / g[299]), 1e-12);
}

TEST(LogGrid, SinglePointIsGeometricMean) {
  EXPECT_NEAR(log_grid(0.5, 2.0, 1)[0], 1.0, 1e-15);
  EXPECT_THROW(log_grid(0.0, 2.0, 3), std::invalid_argument);
  EXPECT_THROW(log_grid(2.0, 1.0, 3), std::invalid_argument);
}

TEST(Sweep, DegenerateGridMatchesDirectSolve) {
  const ProblemInstance inst = small_instance(3);
  const NoiseBatch noise = make_noise_batch(8, 1, 3);
  const double lambda = 0.05;
  const SweepGrid g = lambda_sweep(inst, noise, log_grid(1.0, 1.0, 1), lambda, tight());
  ASSERT_EQ(g.n(), 1);
  ASSERT_EQ(g.k(), 1);
  const VectorXd y = measure(inst, noise.realizations[0]);
  const SolveReport r = solve_qp(inst.A, y, lambda, tight());
  EXPECT_NEAR(g.loss(0, 0), loss_nnse(r.estimate, inst.x0.values, inst.eta), 1e-8 * (1.0 + g.loss(0, 0)));
  EXPECT_NEAR(g.tau(0, 0), r.estimate.lpNorm<1>(), 1e-9);
}

TEST(Sweep, ShapeAndRecomputedAverages) {
  const ProblemInstance inst = small_instance(4);
  const NoiseBatch noise = make_noise_batch(8, 3, 4);
  const VectorXd rho = log_grid(0.5, 2.0, 5);
  const SweepGrid g = lambda_sweep(inst, noise, rho, 0.05, tight());
  ASSERT_EQ(g.loss.rows(), 5);
  ASSERT_EQ(g.loss.cols(), 3);
  EXPECT_EQ(g.failures(), 0);
  for (Index i = 0; i < 5; ++i) {
    std::vector<double> losses;
    for (Index j = 0; j < 3; ++j) {
      const VectorXd y = measure(inst, make_noise(8, 4, static_cast<std::uint64_t>(j)));
      const SolveReport r = solve_qp(inst.A, y, rho[i] * 0.05, tight());
      losses.push_back(loss_nnse(r.estimate, inst.x0.values, inst.eta));
    }
    EXPECT_NEAR(g.loss.row(i).mean(), oracle::sample_mean(losses), 1e-6 * (1.0 + oracle::sample_mean(losses)));
  }
}

TEST(Sweep, CellsAgreeWithConstrainedPrograms) {
  const ProblemInstance inst = small_instance(5);
  const NoiseBatch noise = make_noise_batch(8, 2, 5);
  const SweepGrid g = lambda_sweep(inst, noise, log_grid(0.5, 2.0, 5), 0.05, tight());
  for (Index j = 0; j < 2; ++j) {
    const VectorXd y = measure(inst, noise.realizations[static_cast<std::size_t>(j)]);
    for (Index i = 0; i < 5; ++i) {
      const SolveReport l = solve_ls(inst.A, y, g.tau(i, j), tight());
      EXPECT_NEAR(std::sqrt(l.objective), g.sigma(i, j), 1e-6);
      const SolveReport b = solve_bp(inst.A, y, g.sigma(i, j), tight());
      EXPECT_NEAR(b.objective, g.tau(i, j), 1e-6);
    }
  }
}

TEST(Sweep, PathMonotonicity) {
  const ProblemInstance inst = small_instance(6, 15, 40, 3);
  const NoiseBatch noise = make_noise_batch(15, 3, 6);
  const SweepGrid g = lambda_sweep(inst, noise, log_grid(0.1, 10.0, 21), 0.05, tight());
  for (Index j = 0; j < g.k(); ++j)
    for (Index i = 1; i < g.n(); ++i) {
      EXPECT_LE(g.tau(i, j), g.tau(i - 1, j) + 1e-8);
      EXPECT_GE(g.sigma(i, j), g.sigma(i - 1, j) - 1e-8);
    }
}

TEST(Sweep, WarmStartDoesNotChangeLosses) {
  const ProblemInstance inst = small_instance(7, 20, 60, 3);
  const NoiseBatch noise = make_noise_batch(20, 2, 7);
  SweepOptions cold;
  cold.warm_start = false;
  const VectorXd rho = log_grid(0.3, 3.0, 9);
  const SweepGrid a = lambda_sweep(inst, noise, rho, 0.05, tight());
  const SweepGrid b = lambda_sweep(inst, noise, rho, 0.05, tight(), cold);
  EXPECT_LT((a.loss - b.loss).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + a.loss.maxCoeff()));
}

TEST(Sweep, WorkerCountDoesNotChangeResults) {
  const ProblemInstance inst = small_instance(8, 20, 60, 3);
  const NoiseBatch noise = make_noise_batch(20, 5, 8);
  SweepOptions many;
  many.workers = 3;
  const VectorXd rho = log_grid(0.3, 3.0, 7);
  const SweepGrid a = lambda_sweep(inst, noise, rho, 0.05, tight());
  const SweepGrid b = lambda_sweep(inst, noise, rho, 0.05, tight(), many);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.tau, b.tau);
  EXPECT_EQ(a.sigma, b.sigma);
}

TEST(Sweep, RejectsBadGrid) {
  const ProblemInstance inst = small_instance(1);
  const NoiseBatch noise = make_noise_batch(8, 1, 1);
  VectorXd bad(2);
  bad << 1.0, 0.5;
  EXPECT_THROW(lambda_sweep(inst, noise, bad, 0.1, SolverConfig{}), std::invalid_argument);
  EXPECT_THROW(lambda_sweep(inst, noise, log_grid(0.5, 2, 3), -1.0, SolverConfig{}), std::invalid_argument);
}

TEST(LambdaStar, MinimizesAverageLossAgainstScan) {
  const ProblemInstance inst = small_instance(9, 30, 80, 2, 0.1);
  const NoiseBatch noise = make_noise_batch(30, 4, 9);
  const LambdaStarResult r = locate_lambda_star(inst, noise, tight());
  ASSERT_GT(r.lambda_star, 0.0);
  auto avg = [&](double lambda) {
    double t = 0;
    for (const auto& z : noise.realizations) {
      const SolveReport s = solve_qp(inst.A, measure(inst, z), lambda, tight());
      t += loss_nnse(s.estimate, inst.x0.values, inst.eta);
    }
    return t / static_cast<double>(noise.k());
  };
  const double at_star = avg(r.lambda_star);
  EXPECT_NEAR(at_star, r.average_loss, 1e-6 * at_star);
  for (double f : {0.5, 0.8, 0.95, 1.05, 1.25, 2.0}) EXPECT_LE(at_star, avg(f * r.lambda_star) * (1.0 + 1e-6));
}

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lassolab/equivalence.hpp"
#include "lassolab/metrics.hpp"
#include "lassolab/sensitivity.hpp"
#include "oracles.hpp"

using namespace lassolab;

namespace {

SweepGrid table_grid(const MatrixXd& loss) {
  SweepGrid g;
  g.rho = log_grid(0.5, 2.0, loss.rows());
  g.lambda_star = 1.0;
  g.lambdas = g.rho;
  g.loss = loss;
  g.psnr = MatrixXd::Zero(loss.rows(), loss.cols());
  g.tau = MatrixXd::Zero(loss.rows(), loss.cols());
  g.sigma = g.tau;
  for (Index i = 0; i < loss.rows(); ++i)
    for (Index j = 0; j < loss.cols(); ++j) {
      g.tau(i, j) = 10.0 / g.rho[i] + 0.1 * static_cast<double>(j);
      g.sigma(i, j) = g.rho[i] + 0.01 * static_cast<double>(j);
    }
  g.converged.setConstant(loss.rows(), loss.cols(), true);
  g.iterations = Eigen::MatrixXi::Zero(loss.rows(), loss.cols());
  return g;
}

}  // namespace

TEST(Loss, PerfectRecovery) {
  const VectorXd x = VectorXd::LinSpaced(5, 1, 5);
  EXPECT_EQ(loss_nnse(x, x, 0.3), 0.0);
}

TEST(Loss, UnitNormalizedError) {
  VectorXd x0 = VectorXd::Zero(4), est = x0;
  est[2] = 2.0;
  EXPECT_DOUBLE_EQ(loss_nnse(est, x0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(loss_nnse(x0 + 2.0 * VectorXd::Unit(4, 0), x0, 2.0), 1.0);
}

TEST(Loss, RejectsNonPositiveEta) {
  EXPECT_THROW(loss_nnse(VectorXd::Zero(2), VectorXd::Zero(2), 0.0), std::invalid_argument);
  EXPECT_THROW(loss_nnse(VectorXd::Zero(2), VectorXd::Zero(2), -1.0), std::invalid_argument);
}

TEST(Psnr, ExactRecoveryIsInfinite) {
  const VectorXd x = VectorXd::Ones(3);
  EXPECT_EQ(psnr(x, x), std::numeric_limits<double>::infinity());
}

TEST(Psnr, ScalarZeroDecibels) {
  VectorXd x0(1), est(1);
  x0 << 1.0;
  est << 0.0;
  EXPECT_NEAR(psnr(est, x0), 0.0, 1e-15);
}

TEST(Psnr, DirectFormula) {
  VectorXd x0 = VectorXd::Zero(4);
  x0[0] = 2.0;
  VectorXd est = x0;
  est[0] += 1.0;
  EXPECT_NEAR(psnr(est, x0), 10.0 * std::log10(16.0), 1e-12);
  EXPECT_THROW(psnr(est, VectorXd::Zero(4)), std::invalid_argument);
}

TEST(Psnr, ArgminLossIsArgmaxPsnr) {
  const VectorXd x0 = VectorXd::LinSpaced(6, -1, 2);
  Engine e = make_engine(3, Stream::noise);
  double best_loss = 1e300, best_psnr = -1e300;
  int arg_loss = -1, arg_psnr = -1;
  for (int t = 0; t < 40; ++t) {
    const VectorXd est = x0 + 0.1 * (t + 1) * standard_normal_vector(6, e) / 6.0;
    const double l = loss_nnse(est, x0, 0.5), p = psnr(est, x0);
    if (l < best_loss) best_loss = l, arg_loss = t;
    if (p > best_psnr) best_psnr = p, arg_psnr = t;
  }
  EXPECT_EQ(arg_loss, arg_psnr);
}

TEST(AverageLoss, SingleRealization) {
  MatrixXd loss(3, 1);
  loss << 4.0, 2.0, 7.0;
  const LossCurve c = average_loss(table_grid(loss), Program::QP);
  EXPECT_EQ(c.average, loss.col(0));
  EXPECT_EQ(c.std_error, VectorXd::Zero(3));
}

TEST(AverageLoss, ConstantAcrossRealizations) {
  const MatrixXd loss = MatrixXd::Constant(4, 5, 3.25);
  const LossCurve c = average_loss(table_grid(loss), Program::LS);
  EXPECT_EQ(c.average, VectorXd::Constant(4, 3.25));
  EXPECT_EQ(c.std_error, VectorXd::Zero(4));
}

TEST(AverageLoss, RandomTableRecomputation) {
  Engine e = make_engine(17, Stream::noise);
  VectorXd v = standard_normal_vector(15, e).cwiseAbs();
  const MatrixXd loss = Eigen::Map<MatrixXd>(v.data(), 5, 3);
  SweepGrid g = table_grid(loss);
  g.converged(2, 1) = false;
  const LossCurve c = average_loss(g, Program::BP);
  for (Index i = 0; i < 5; ++i) {
    std::vector<double> xs;
    for (Index j = 0; j < 3; ++j)
      if (!(i == 2 && j == 1)) xs.push_back(loss(i, j));
    const double mean = oracle::sample_mean(xs);
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
    EXPECT_NEAR(c.average[i], mean, 1e-14);
    EXPECT_NEAR(c.std_error[i], se, 1e-14);
    EXPECT_EQ(c.counts[i], static_cast<int>(xs.size()));
  }
  EXPECT_EQ(c.param_values, g.sigma);
}

TEST(AverageLoss, ParameterColumnsFollowProgram) {
  const SweepGrid g = table_grid(MatrixXd::Ones(3, 2));
  EXPECT_EQ(average_loss(g, Program::LS).param_values, g.tau);
  EXPECT_EQ(average_loss(g, Program::BP).param_values, g.sigma);
  EXPECT_EQ(average_loss(g, Program::QP).param_values.col(1), g.lambdas);
}

TEST(AverageLoss, AllInvalidRowNamesIndex) {
  SweepGrid g = table_grid(MatrixXd::Ones(3, 2));
  g.converged.row(1).setConstant(false);
  try {
    average_loss(g, Program::QP);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
}

TEST(Resample, LinearInterpolationPerRealization) {
  MatrixXd loss(3, 2);
  loss << 1.0, 3.0, 2.0, 5.0, 4.0, 9.0;
  SweepGrid g = table_grid(loss);
  g.tau << 1.0, 1.0, 2.0, 2.0, 3.0, 4.0;
  const LossCurve c = average_loss(g, Program::LS);
  VectorXd q(4);
  q << 0.5, 1.5, 3.0, 5.0;
  const ResampledCurve r = resample(c, q);
  EXPECT_TRUE(std::isnan(r.average[0]));
  EXPECT_NEAR(r.average[1], (1.5 + 4.0) / 2.0, 1e-14);
  EXPECT_NEAR(r.average[2], (4.0 + 7.0) / 2.0, 1e-14);
  EXPECT_EQ(r.counts[3], 0);
  EXPECT_TRUE(std::isnan(r.average[3]));
}

TEST(Failures, BudgetEnforced) {
  EXPECT_NO_THROW(enforce_failure_budget(1, 100));
  EXPECT_THROW(enforce_failure_budget(2, 100), SolverBudgetExceeded);
  EXPECT_NO_THROW(enforce_failure_budget(0, 0));
}

TEST(Programs, NamesRoundTrip) {
  for (Program p : {Program::LS, Program::QP, Program::BP}) EXPECT_EQ(parse_program(to_string(p)), p);
  EXPECT_THROW(parse_program("XY"), std::invalid_argument);
}

TEST(RiskMc, ZeroEstimatorAboveLambdaMax) {
  const ProblemInstance inst{make_sparse_signal(20, 2, 1.0), make_matrix(8, 20, Ensemble::gaussian, 2), 0.1, 2};
  const RiskEstimate r = risk_mc(inst, Program::QP, 1e6, 5, SolverConfig{});
  EXPECT_DOUBLE_EQ(r.value, inst.x0.values.squaredNorm() / (0.1 * 0.1));
  EXPECT_EQ(r.std_error, 0.0);
  EXPECT_EQ(r.k, 5);
  EXPECT_THROW(risk_mc(inst, Program::QP, 1.0, 1, SolverConfig{}), std::invalid_argument);
}

TEST(RiskMc, SelfConsistentAcrossSampleSizes) {
  const ProblemInstance inst{make_sparse_signal(20, 2, 1.0), make_matrix(8, 20, Ensemble::gaussian, 3), 0.1, 3};
  const RiskEstimate a = risk_mc(inst, Program::LS, 2.0, 500, SolverConfig{});
  ProblemInstance other = inst;
  other.noise_seed = 1234;
  const RiskEstimate b = risk_mc(other, Program::LS, 2.0, 5000, SolverConfig{});
  const double pooled = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
  EXPECT_LT(std::abs(a.value - b.value), 3.0 * pooled);
}

TEST(RiskMc, TunedLsOrderEnvelope) {
  // Low-noise tuned LS risk on a recovery instance scales like s log(N/s).
  const Index N = 200, m = 80, s = 2;
  const ProblemInstance inst{make_sparse_signal(N, s, 1.0), make_matrix(m, N, Ensemble::gaussian, 4), 1e-3, 4};
  const RiskEstimate r = risk_mc(inst, Program::LS, inst.x0.l1_norm(), 200, SolverConfig{});
  const double scale = static_cast<double>(s) * std::log(static_cast<double>(N) / (2.0 * s));
  EXPECT_GT(r.value, 0.05 * scale);
  EXPECT_LT(r.value, 10.0 * scale);
}

TEST(RiskMc, ScalingLaw) {
  // R(tau; tau x, A, eta) = R(1; x, A, eta / tau) with shared noise.
  const double tau = 3.0, eta = 0.02;
  const MeasurementMatrix A = make_matrix(30, 60, Ensemble::gaussian, 5);
  VectorXd x = make_sparse_signal(60, 3, 1.0 / 3.0).values;
  const ProblemInstance big{SparseSignal::from_values(tau * x), A, eta, 6};
  const ProblemInstance unit{SparseSignal::from_values(x), A, eta / tau, 6};
  const RiskEstimate a = risk_mc(big, Program::LS, tau, 200, SolverConfig{});
  const RiskEstimate b = risk_mc(unit, Program::LS, 1.0, 200, SolverConfig{});
  EXPECT_LT(std::abs(a.value - b.value), 3.0 * std::hypot(a.std_error, b.std_error) + 1e-6 * a.value);
}

TEST(Rstar, SingletonSphere) {
  const MeasurementMatrix A = make_matrix(3, 1, Ensemble::gaussian, 7);
  const RiskEstimate r = rstar_benchmark(A, 1, 1e-3, 0, 50, SolverConfig{}, 7);
  VectorXd one(1);
  one << 1.0;
  const RiskEstimate direct = risk_mc({SparseSignal::from_values(one), A, 1e-3, 7}, Program::LS, 1.0, 50, SolverConfig{});
  EXPECT_DOUBLE_EQ(r.value, direct.value);
}

TEST(Rstar, MoreCandidatesNeverDecrease) {
  const MeasurementMatrix A = make_matrix(20, 50, Ensemble::gaussian, 8);
  const RiskEstimate few = rstar_benchmark(A, 2, 1e-3, 2, 20, SolverConfig{}, 8);
  const RiskEstimate more = rstar_benchmark(A, 2, 1e-3, 6, 20, SolverConfig{}, 8);
  EXPECT_GE(more.value, few.value);
}

TEST(Rstar, CandidatesLieOnSparseSphere) {
  for (const VectorXd& x : rstar_candidates(40, 3, 10, 9)) {
    EXPECT_NEAR(x.lpNorm<1>(), 1.0, 1e-12);
    EXPECT_LE((x.array() != 0.0).count(), 3);
  }
}

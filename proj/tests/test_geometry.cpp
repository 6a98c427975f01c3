#include <gtest/gtest.h>

#include <cmath>

#include "lassolab/geometry.hpp"
#include "lassolab/solvers.hpp"

using namespace lassolab;

namespace {

double chi_mean(double n) { return std::sqrt(2.0) * std::exp(std::lgamma((n + 1.0) / 2.0) - std::lgamma(n / 2.0)); }

/// Support function of {q : ||q||_1 <= 1, ||q||_2 <= alpha} in R^2 along the
/// unit direction at angle theta, by dense sampling of the set boundary.
double diamond_disk_support(double theta, double alpha) {
  const double ux = std::cos(theta), uy = std::sin(theta);
  double best = 0.0;
  const int steps = 4000;
  for (int i = 0; i <= steps; ++i) {
    const double t = 2.0 * M_PI * i / steps;
    // Disk boundary point, kept if inside the diamond.
    const double cx = alpha * std::cos(t), cy = alpha * std::sin(t);
    if (std::abs(cx) + std::abs(cy) <= 1.0) best = std::max(best, cx * ux + cy * uy);
    // Diamond boundary point, kept if inside the disk.
    const double p = 4.0 * i / steps;
    const int side = std::min(3, static_cast<int>(p));
    const double f = p - side;
    const double vx[] = {1, 0, -1, 0, 1}, vy[] = {0, 1, 0, -1, 0};
    const double dx = vx[side] + f * (vx[side + 1] - vx[side]);
    const double dy = vy[side] + f * (vy[side + 1] - vy[side]);
    if (dx * dx + dy * dy <= alpha * alpha) best = std::max(best, dx * ux + dy * uy);
  }
  return best;
}

}  // namespace

TEST(SparseCap, SupportIsTopMagnitudesNorm) {
  VectorXd g(5);
  g << 0.5, -3.0, 1.0, 2.0, -0.1;
  EXPECT_NEAR(sparse_cap_support(g, 2), std::sqrt(13.0), 1e-15);
  EXPECT_NEAR(sparse_cap_support(g, 5), g.norm(), 1e-15);
}

TEST(SparseCap, FullSupportMatchesChiMean) {
  const WidthEstimate w = gw_sparse_cap(100, 100, 20000, 1);
  EXPECT_LT(std::abs(w.mean - chi_mean(100.0)), 3.0 * w.std_error);
  EXPECT_EQ(w.samples, 20000);
}

TEST(SparseCap, ScalarHalfNormal) {
  const WidthEstimate w = gw_sparse_cap(1, 1, 50000, 2);
  EXPECT_LT(std::abs(w.mean - std::sqrt(2.0 / M_PI)), 3.0 * w.std_error);
}

TEST(SparseCap, EnvelopeAtModerateDimension) {
  const WidthEstimate w = gw_sparse_cap(2, 1000, 100000, 3);
  const double ref = 2.0 * std::log(2.0 * 1000.0 / 2.0);
  EXPECT_GE(w.mean * w.mean, 0.3 * ref);
  EXPECT_LE(w.mean * w.mean, 4.0 * ref);
}

TEST(SparseCap, WidthEqualsComplexityOnSymmetricSet) {
  const WidthEstimate w = gw_sparse_cap(3, 200, 20000, 4);
  const WidthEstimate c = gc_sparse_cap(3, 200, 20000, 4);
  EXPECT_LT(std::abs(w.mean - c.mean), 3.0 * std::hypot(w.std_error, c.std_error));
}

TEST(SparseCap, MonotoneInSparsityAndDimension) {
  double prev = 0.0;
  for (Index s : {1, 2, 4, 8, 16}) {
    const double v = gw_sparse_cap(s, 64, 2000, 5).mean;
    EXPECT_GE(v, prev);
    prev = v;
  }
  prev = 0.0;
  for (Index N : {8, 16, 64, 256}) {
    const double v = gw_sparse_cap(4, N, 2000, 5).mean;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(SparseCap, WorkerCountInvariant) {
  const WidthEstimate a = gw_sparse_cap(3, 100, 3000, 6, 1);
  const WidthEstimate b = gw_sparse_cap(3, 100, 3000, 6, 3);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(Ks, SupportMatchesBruteForce) {
  // max <x, g> over ||x||_2 <= 1, ||x||_1 <= sqrt(s), checked against a fine
  // scan of the dual min_t ||soft_t(g)||_2 + sqrt(s) t.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Engine e = make_engine(seed, Stream::width, 999);
    const VectorXd g = standard_normal_vector(30, e);
    for (double s : {1.0, 2.0, 5.0, 30.0}) {
      double brute = 1e300;
      const double top = g.cwiseAbs().maxCoeff();
      for (int i = 0; i <= 200000; ++i) {
        const double t = top * i / 200000.0;
        brute = std::min(brute, soft_threshold(g, t).norm() + std::sqrt(s) * t);
      }
      EXPECT_NEAR(ks_support(g, s), brute, 1e-6 * brute) << "seed " << seed << " s " << s;
    }
  }
}

TEST(Ks, ConvexificationSandwich) {
  for (Index s : {1, 3, 10}) {
    const WidthEstimate cap = gw_sparse_cap(s, 300, 5000, 7);
    const WidthEstimate ks = gw_ks(s, 300, 5000, 7);
    const double se = std::hypot(cap.std_error, ks.std_error);
    EXPECT_GE(ks.mean, cap.mean - 3.0 * se);
    EXPECT_LE(ks.mean, 2.0 * cap.mean + 3.0 * se);
  }
}

TEST(Deviation, OrthonormalIsIsometry) {
  const MatrixXd R = make_matrix(12, 12, Ensemble::gaussian, 8).entries();
  const MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(R).householderQ();
  const DeviationResult d = deviation_check(MeasurementMatrix::from_entries(Q), 2, 200, 1);
  EXPECT_TRUE(d.exhaustive_done);
  EXPECT_LT(d.value, 1e-12);
}

TEST(Deviation, NoIsometryWithoutSparsity) {
  const MeasurementMatrix A = make_matrix(5, 40, Ensemble::gaussian, 9);
  const DeviationResult d = deviation_check(A, 40, 100, 2);
  EXPECT_TRUE(d.exhaustive_done);
  EXPECT_GE(d.value, 1.0 - 1e-12);
}

TEST(Deviation, SmallAtGenerousMeasurementCount) {
  const Index N = 500, s = 3;
  const Index m = static_cast<Index>(std::ceil(20.0 * s * std::log(static_cast<double>(N) / s)));
  int below = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DeviationResult d = deviation_check(make_matrix(m, N, Ensemble::gaussian, 100 + seed), s, 500, seed);
    EXPECT_FALSE(d.exhaustive_done);
    below += d.value < 0.5;
  }
  EXPECT_GE(below, 9);
}

TEST(Deviation, ExhaustiveDominatesSampled) {
  const MeasurementMatrix A = make_matrix(10, 15, Ensemble::gaussian, 10);
  const DeviationResult d = deviation_check(A, 2, 300, 3);
  ASSERT_TRUE(d.exhaustive_done);
  EXPECT_GE(d.exhaustive + 1e-12, d.sampled);
}

TEST(HullWidth, InactiveBallMatchesVertexMaximum) {
  const MeasurementMatrix A = make_matrix(6, 10, Ensemble::gaussian, 11);
  const double big = A.entries().colwise().norm().maxCoeff() * 1.01;
  const WidthEstimate w = random_hull_width(A, big, 4000, 12);
  std::vector<double> direct;
  for (int t = 0; t < 4000; ++t) {
    Engine e = make_engine(12, Stream::width, static_cast<std::uint64_t>(t));
    direct.push_back((A.entries().transpose() * standard_normal_vector(6, e)).cwiseAbs().maxCoeff());
  }
  double mean = 0;
  for (double v : direct) mean += v;
  mean /= 4000.0;
  EXPECT_NEAR(w.mean, mean, 1e-12 * mean);
}

TEST(HullWidth, DiamondAgainstQuadrature) {
  const MeasurementMatrix A = MeasurementMatrix::from_entries(MatrixXd::Identity(2, 2));
  for (double alpha : {1.0, 0.5, 0.85}) {
    // E sup = E||g|| * mean over directions of the support function.
    double h = 0.0;
    const int dirs = 720;
    for (int i = 0; i < dirs; ++i) h += diamond_disk_support(2.0 * M_PI * (i + 0.5) / dirs, alpha);
    const double oracle = std::sqrt(M_PI / 2.0) * h / dirs;
    const WidthEstimate w = random_hull_width(A, alpha, 4000, 13);
    EXPECT_EQ(w.dropped, 0);
    EXPECT_LT(std::abs(w.mean - oracle), 3.0 * w.std_error + 1e-3) << "alpha " << alpha;
  }
}

TEST(HullWidth, UpperEnvelope) {
  const double delta = 0.2;
  for (auto [m, N] : {std::pair<Index, Index>{20, 60}, {40, 200}}) {
    const MeasurementMatrix A = make_matrix(m, N, Ensemble::gaussian, 14);
    for (double alpha : {0.5, 1.0, 2.0}) {
      const WidthEstimate w = random_hull_width(A, alpha, 100, 15);
      const double bound = std::min(
          4.0 * (1.0 + delta) * std::sqrt(std::max(1.0, std::log(8.0 * M_E * N * alpha * alpha))),
          alpha * std::sqrt(static_cast<double>(std::min<Index>(m, 2 * N))));
      EXPECT_LE(w.mean, bound + 3.0 * w.std_error) << m << "x" << N << " alpha " << alpha;
    }
  }
}

TEST(DescentCone, MovingTowardOrigin) {
  const SparseSignal x = make_sparse_signal(10, 3, 2.0, SupportRule::random(1));
  EXPECT_TRUE(descent_cone_member(x, -x.values));
}

TEST(DescentCone, OffSupportDirectionExcluded) {
  const SparseSignal x = make_sparse_signal(10, 3, 2.0);
  VectorXd h = VectorXd::Zero(10);
  h[7] = 0.01;
  EXPECT_FALSE(descent_cone_member(x, h));
  EXPECT_THROW(descent_cone_member(make_sparse_signal(10, 0, 1.0), h), std::invalid_argument);
}

TEST(DescentCone, TunedLsErrorsLieInCone) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index m = 40, N = 100, s = 3;
    const SparseSignal x0 = make_sparse_signal(N, s, 1.0, SupportRule::random(seed));
    const MeasurementMatrix A = make_matrix(m, N, Ensemble::gaussian, seed);
    const VectorXd y = A.entries() * x0.values + 0.05 * make_noise(m, seed, 0);
    SolverConfig cfg;
    cfg.tol_cert = 1e-10;
    const SolveReport r = solve_ls(A, y, x0.l1_norm(), cfg);
    ASSERT_TRUE(r.converged);
    const VectorXd h = r.estimate - x0.values;
    EXPECT_TRUE(descent_cone_member(x0, h)) << "seed " << seed;
    EXPECT_LE(h.lpNorm<1>(), 2.0 * std::sqrt(static_cast<double>(s)) * h.norm() * (1.0 + 1e-8) + 1e-12);
  }
}

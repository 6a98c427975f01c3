#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lassolab/equivalence.hpp"
#include "lassolab/metrics.hpp"
#include "lassolab/model.hpp"
#include "lassolab/parallel.hpp"
#include "lassolab/solvers.hpp"

namespace lassolab {

enum class Program { LS, QP, BP };

inline std::string_view to_string(Program p) {
  switch (p) {
    case Program::LS: return "LS";
    case Program::QP: return "QP";
    case Program::BP: return "BP";
  }
  return "?";
}

inline Program parse_program(std::string_view name) {
  if (name == "LS" || name == "ls") return Program::LS;
  if (name == "QP" || name == "qp") return Program::QP;
  if (name == "BP" || name == "bp") return Program::BP;
  throw std::invalid_argument("unknown program: " + std::string(name));
}

/// Thrown when more than the allowed fraction of solves failed to certify.
class SolverBudgetExceeded : public std::runtime_error {
 public:
  SolverBudgetExceeded(Index failures, Index total)
      : std::runtime_error("solver failure budget exceeded: " + std::to_string(failures) + " of " +
                           std::to_string(total) + " solves did not converge"),
        failures_(failures),
        total_(total) {}
  Index failures() const { return failures_; }
  Index total() const { return total_; }

 private:
  Index failures_;
  Index total_;
};

inline void enforce_failure_budget(Index failures, Index total, double fraction = 0.01) {
  if (total > 0 && static_cast<double>(failures) > fraction * static_cast<double>(total))
    throw SolverBudgetExceeded(failures, total);
}

/// Losses of one sweep read against one program's parameter.
struct LossCurve {
  Program program = Program::QP;
  VectorXd rho;
  MatrixXd param_values;  // lambda_i (QP), tau_ij (LS) or sigma_ij (BP)
  MatrixXd losses;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;
  VectorXd average;
  VectorXd std_error;
  Eigen::VectorXi counts;

  Index n() const { return losses.rows(); }
  Index k() const { return losses.cols(); }
};

namespace detail {

inline std::pair<double, double> mean_and_stderr(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

}  // namespace detail

inline LossCurve average_loss(const SweepGrid& grid, Program program) {
  LossCurve c;
  c.program = program;
  c.rho = grid.rho;
  c.losses = grid.loss;
  c.valid = grid.converged;
  const Index n = grid.n(), k = grid.k();
  switch (program) {
    case Program::QP: c.param_values = grid.lambdas.replicate(1, k); break;
    case Program::LS: c.param_values = grid.tau; break;
    case Program::BP: c.param_values = grid.sigma; break;
  }
  c.average = VectorXd::Zero(n);
  c.std_error = VectorXd::Zero(n);
  c.counts = Eigen::VectorXi::Zero(n);
  for (Index i = 0; i < n; ++i) {
    std::vector<double> xs;
    for (Index j = 0; j < k; ++j)
      if (c.valid(i, j)) xs.push_back(c.losses(i, j));
    if (xs.empty())
      throw std::runtime_error("average_loss: every realization is invalid at grid index " + std::to_string(i));
    const auto [mean, se] = detail::mean_and_stderr(xs);
    c.average[i] = mean;
    c.std_error[i] = se;
    c.counts[i] = static_cast<int>(xs.size());
  }
  return c;
}

/// Average of per-realization curves at common parameter values.
struct ResampledCurve {
  VectorXd params;
  VectorXd average;
  VectorXd std_error;
  Eigen::VectorXi counts;
};

/// Linearly interpolates each realization's (parameter, loss) path at the
/// query parameters and averages over realizations covering each query
/// (no extrapolation). Queries covered by nobody get NaN.
inline ResampledCurve resample(const LossCurve& curve, const VectorXd& params) {
  ResampledCurve out;
  out.params = params;
  out.average = VectorXd::Constant(params.size(), std::numeric_limits<double>::quiet_NaN());
  out.std_error = out.average;
  out.counts = Eigen::VectorXi::Zero(params.size());
  std::vector<std::vector<double>> samples(static_cast<std::size_t>(params.size()));
  for (Index j = 0; j < curve.k(); ++j) {
    std::vector<std::pair<double, double>> path;
    for (Index i = 0; i < curve.n(); ++i)
      if (curve.valid(i, j)) path.emplace_back(curve.param_values(i, j), curve.losses(i, j));
    std::sort(path.begin(), path.end());
    // Merge coincident parameters (e.g. the zero estimate above lambda_max).
    std::vector<std::pair<double, double>> merged;
    for (std::size_t a = 0; a < path.size();) {
      std::size_t b = a;
      double total = 0.0;
      while (b < path.size() && path[b].first == path[a].first) total += path[b++].second;
      merged.emplace_back(path[a].first, total / static_cast<double>(b - a));
      a = b;
    }
    if (merged.empty()) continue;
    for (Index q = 0; q < params.size(); ++q) {
      const double p = params[q];
      if (p < merged.front().first || p > merged.back().first) continue;
      auto hi = std::lower_bound(merged.begin(), merged.end(), std::make_pair(p, -std::numeric_limits<double>::infinity()));
      double value;
      if (hi->first == p || hi == merged.begin()) {
        value = hi->second;
      } else {
        auto lo = hi - 1;
        const double w = (p - lo->first) / (hi->first - lo->first);
        value = (1.0 - w) * lo->second + w * hi->second;
      }
      samples[static_cast<std::size_t>(q)].push_back(value);
    }
  }
  for (Index q = 0; q < params.size(); ++q) {
    const auto& xs = samples[static_cast<std::size_t>(q)];
    if (xs.empty()) continue;
    const auto [mean, se] = detail::mean_and_stderr(xs);
    out.average[q] = mean;
    out.std_error[q] = se;
    out.counts[q] = static_cast<int>(xs.size());
  }
  return out;
}

struct RiskEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int k = 0;
  int failures = 0;
};

/// Solves `program` at `param` for measurement vector y.
inline SolveReport solve_program(Program program, const MeasurementMatrix& A, const VectorXd& y,
                                 double param, const SolverConfig& cfg) {
  switch (program) {
    case Program::LS: return solve_ls(A, y, param, cfg);
    case Program::QP: return solve_qp(A, y, param, cfg);
    case Program::BP: return solve_bp(A, y, param, cfg);
  }
  throw std::invalid_argument("solve_program: unknown program");
}

/// Monte-Carlo risk over k noise draws rooted at instance.noise_seed. Solves
/// that fail to certify (or have infeasible sigma) are excluded and counted.
inline RiskEstimate risk_mc(const ProblemInstance& instance, Program program, double param, int k,
                            const SolverConfig& cfg, unsigned workers = 1) {
  if (k < 2) throw std::invalid_argument("risk_mc: k must be >= 2");
  std::vector<double> losses(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  parallel_for(static_cast<std::size_t>(k), workers, [&](std::size_t j) {
    const VectorXd y = measure(instance, make_noise(instance.m(), instance.noise_seed, j));
    try {
      const SolveReport r = solve_program(program, instance.A, y, param, cfg);
      if (r.converged) losses[j] = loss_nnse(r.estimate, instance.x0.values, instance.eta);
    } catch (const InfeasibleSigma&) {
    }
  });
  std::vector<double> kept;
  for (double l : losses)
    if (!std::isnan(l)) kept.push_back(l);
  RiskEstimate est;
  est.failures = k - static_cast<int>(kept.size());
  est.k = static_cast<int>(kept.size());
  if (kept.empty()) {
    est.value = std::numeric_limits<double>::quiet_NaN();
    est.std_error = std::numeric_limits<double>::quiet_NaN();
    return est;
  }
  std::tie(est.value, est.std_error) = detail::mean_and_stderr(kept);
  return est;
}

/// Candidate points of the l1 sphere for the worst-case risk benchmark: the
/// flat vector followed by random s-sparse points (random support, uniform
/// simplex weights, random signs).
inline std::vector<VectorXd> rstar_candidates(Index N, Index s, int num_candidates, std::uint64_t seed) {
  if (s < 1 || s > N) throw std::invalid_argument("rstar_candidates: need 1 <= s <= N");
  std::vector<VectorXd> out;
  VectorXd flat = VectorXd::Zero(N);
  flat.head(s).setConstant(1.0 / static_cast<double>(s));
  out.push_back(flat);
  for (int c = 0; c < num_candidates; ++c) {
    Engine engine = make_engine(seed, Stream::candidates, static_cast<std::uint64_t>(c));
    const auto support = random_support(N, s, engine);
    std::exponential_distribution<double> expo(1.0);
    std::bernoulli_distribution coin(0.5);
    VectorXd w(s);
    for (Index i = 0; i < s; ++i) w[i] = expo(engine);
    w /= w.sum();
    VectorXd x = VectorXd::Zero(N);
    for (Index i = 0; i < s; ++i) x[support[static_cast<std::size_t>(i)]] = coin(engine) ? w[i] : -w[i];
    out.push_back(x);
  }
  return out;
}

/// Low-noise worst-case tuned (LS) risk: max over candidates x of the risk
/// of (LS) at tau = 1 = ||x||_1 with noise level eta_small.
inline RiskEstimate rstar_benchmark(const MeasurementMatrix& A, Index s, double eta_small,
                                    int num_candidates, int k, const SolverConfig& cfg,
                                    std::uint64_t seed = 0, unsigned workers = 1) {
  if (!(eta_small > 0.0)) throw std::invalid_argument("rstar_benchmark: eta_small must be positive");
  if (num_candidates < 0) throw std::invalid_argument("rstar_benchmark: num_candidates must be >= 0");
  RiskEstimate best;
  best.value = -std::numeric_limits<double>::infinity();
  for (const VectorXd& x : rstar_candidates(A.cols(), s, num_candidates, seed)) {
    ProblemInstance inst{SparseSignal::from_values(x), A, eta_small, seed};
    const RiskEstimate r = risk_mc(inst, Program::LS, 1.0, k, cfg, workers);
    if (r.value > best.value) best = r;
  }
  return best;
}

}  // namespace lassolab

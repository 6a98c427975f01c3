#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lassolab/linalg.hpp"
#include "lassolab/model.hpp"

namespace lassolab {

enum class StepRule { fixed_inv_L, backtracking };

struct SolverConfig {
  int max_iters = 50000;
  double tol_rel_obj = 1e-10;  // stagnation test on the objective
  double tol_cert = 1e-6;      // program-specific certificate tolerance
  StepRule step_rule = StepRule::fixed_inv_L;
  /// Active-set refinement of the proximal iterate: re-solve the KKT system
  /// on the current support/sign pattern and keep it only if it certifies.
  bool polish = true;
  int check_every = 10;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
    if (!(tol_rel_obj > 0.0) || !(tol_cert > 0.0))
      throw std::invalid_argument("SolverConfig: tolerances must be positive");
    if (check_every < 1) throw std::invalid_argument("SolverConfig: check_every must be >= 1");
  }
};

struct SolveReport {
  VectorXd estimate;
  double objective = 0.0;
  int iterations = 0;
  /// QP: max KKT violation. LS: Frank-Wolfe gap. BP: | ||y - Ax|| - sigma |.
  double certificate = std::numeric_limits<double>::infinity();
  bool converged = false;
  /// BP only: the QP parameter whose solution was returned.
  double lambda = std::numeric_limits<double>::quiet_NaN();
};

/// Thrown by solve_bp when no QP solution reaches the requested residual.
class InfeasibleSigma : public std::runtime_error {
 public:
  InfeasibleSigma(double sigma, double minimal_residual)
      : std::runtime_error("solve_bp: sigma = " + std::to_string(sigma) +
                           " is below the minimal achievable residual " +
                           std::to_string(minimal_residual)),
        sigma_(sigma),
        minimal_residual_(minimal_residual) {}
  double sigma() const { return sigma_; }
  double minimal_residual() const { return minimal_residual_; }

 private:
  double sigma_;
  double minimal_residual_;
};

// ---------------------------------------------------------------------------
// Proximal and projection primitives
// ---------------------------------------------------------------------------

template <class Derived>
VectorXd soft_threshold(const Eigen::MatrixBase<Derived>& v, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("soft_threshold: threshold must be >= 0");
  VectorXd out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]) - t;
    out[i] = a > 0.0 ? std::copysign(a, v[i]) : 0.0;
  }
  return out;
}

/// Threshold theta >= 0 with sum_i max(|v_i| - theta, 0) = tau, or 0 when
/// v is already inside the ball. Sort-based: O(N log N).
inline double l1_ball_threshold(const VectorXd& v, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("project_l1_ball: tau must be >= 0");
  if (v.lpNorm<1>() <= tau) return 0.0;
  std::vector<double> mags(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    cumulative += mags[k];
    const double candidate = (cumulative - tau) / static_cast<double>(k + 1);
    if (k + 1 == mags.size() || mags[k + 1] <= candidate) {
      theta = candidate;
      break;
    }
  }
  return std::max(theta, 0.0);
}

/// Euclidean projection onto { w : ||w||_1 <= tau }.
inline VectorXd project_l1_ball(const VectorXd& v, double tau) {
  const double theta = l1_ball_threshold(v, tau);
  if (theta == 0.0) return v;
  VectorXd out = soft_threshold(v, theta);
  // Rounding in the cumulative sum can leave the result a hair outside.
  const double norm = out.lpNorm<1>();
  if (norm > tau && norm > 0.0) out *= tau / norm;
  return out;
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// max_i dist(g_i, lambda * d|x_i|) with g = A^T (y - Ax).
inline double qp_kkt_violation(const VectorXd& g, const VectorXd& x, double lambda) {
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x[i] != 0.0 ? std::abs(g[i] - lambda * sign(x[i]))
                                 : std::max(std::abs(g[i]) - lambda, 0.0);
    worst = std::max(worst, v);
  }
  return worst;
}

/// Frank-Wolfe gap of ||y - Ax||^2 over tau B_1, with g = A^T (y - Ax).
inline double ls_frank_wolfe_gap(const VectorXd& g, const VectorXd& x, double tau) {
  return std::max(0.0, 2.0 * (tau * g.lpNorm<Eigen::Infinity>() - g.dot(x)));
}

inline std::vector<Index> support_of(const VectorXd& x) {
  std::vector<Index> s;
  for (Index i = 0; i < x.size(); ++i)
    if (x[i] != 0.0) s.push_back(i);
  return s;
}

inline MatrixXd gather_columns(const MatrixXd& M, const std::vector<Index>& cols) {
  MatrixXd out(M.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = M.col(cols[k]);
  return out;
}

/// Restricted solution on a fixed sign pattern: x_S = a - lambda * b with
/// a = G^{-1} A_S^T y, b = G^{-1} s, G = A_S^T A_S.
struct Pattern {
  std::vector<Index> support;
  VectorXd signs;
  MatrixXd AS;
  VectorXd a, b;
  bool ok = false;
};

inline Pattern factor_pattern(const MatrixXd& M, const VectorXd& y, std::vector<Index> support,
                              VectorXd signs) {
  Pattern p;
  p.support = std::move(support);
  p.signs = std::move(signs);
  if (p.support.empty()) {
    p.ok = true;
    return p;
  }
  if (static_cast<Index>(p.support.size()) > M.rows()) return p;
  p.AS = gather_columns(M, p.support);
  MatrixXd G = p.AS.transpose() * p.AS;
  Eigen::LLT<MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) return p;
  // Reject numerically rank-deficient supports.
  const double dmin = llt.matrixLLT().diagonal().minCoeff();
  const double dmax = llt.matrixLLT().diagonal().maxCoeff();
  if (!(dmin > 1e-7 * dmax)) return p;
  p.a = llt.solve(p.AS.transpose() * y);
  p.b = llt.solve(p.signs);
  p.ok = true;
  return p;
}

inline VectorXd expand(const Pattern& p, const VectorXd& xs, Index N) {
  VectorXd x = VectorXd::Zero(N);
  for (std::size_t k = 0; k < p.support.size(); ++k) x[p.support[k]] = xs[static_cast<Index>(k)];
  return x;
}

struct Candidate {
  VectorXd x;
  double certificate = std::numeric_limits<double>::infinity();
};

/// Active-set refinement for the penalized program at fixed lambda. A few
/// rounds drop wrong-sign coordinates and admit the worst KKT violator.
inline std::optional<Candidate> polish_qp(const MatrixXd& M, const VectorXd& y, double lambda,
                                          const VectorXd& x) {
  std::vector<Index> support = support_of(x);
  VectorXd signs(static_cast<Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) signs[static_cast<Index>(k)] = sign(x[support[k]]);
  std::optional<Candidate> best;
  for (int round = 0; round < 6; ++round) {
    Pattern p = factor_pattern(M, y, support, signs);
    if (!p.ok) return best;
    VectorXd xs = p.support.empty() ? VectorXd() : VectorXd(p.a - lambda * p.b);
    std::vector<Index> keep;
    VectorXd keep_signs(static_cast<Index>(p.support.size()));
    Index n_keep = 0;
    for (std::size_t k = 0; k < p.support.size(); ++k) {
      if (xs[static_cast<Index>(k)] * p.signs[static_cast<Index>(k)] > 0.0) {
        keep.push_back(p.support[k]);
        keep_signs[n_keep++] = p.signs[static_cast<Index>(k)];
      }
    }
    if (keep.size() != p.support.size()) {
      support = std::move(keep);
      signs = keep_signs.head(n_keep);
      continue;
    }
    Candidate c;
    c.x = expand(p, xs, M.cols());
    const VectorXd g = M.transpose() * (y - M * c.x);
    c.certificate = qp_kkt_violation(g, c.x, lambda);
    if (!best || c.certificate < best->certificate) best = c;
    // Admit the worst off-support violator, if any.
    Index worst = -1;
    double worst_excess = 0.0;
    for (Index i = 0; i < g.size(); ++i) {
      if (c.x[i] != 0.0) continue;
      const double excess = std::abs(g[i]) - lambda;
      if (excess > worst_excess) {
        worst_excess = excess;
        worst = i;
      }
    }
    if (worst < 0) return best;
    auto pos = std::lower_bound(support.begin(), support.end(), worst);
    const Index at = static_cast<Index>(pos - support.begin());
    support.insert(pos, worst);
    VectorXd grown(signs.size() + 1);
    grown << signs.head(at), sign(g[worst]), signs.tail(signs.size() - at);
    signs = grown;
  }
  return best;
}

/// Active-set refinement for the constrained program. Handles the active
/// constraint (bordered KKT system) and the interior least-squares case.
inline std::optional<Candidate> polish_ls(const MatrixXd& M, const VectorXd& y, double tau,
                                          const VectorXd& x) {
  std::vector<Index> support = support_of(x);
  if (support.empty()) return std::nullopt;
  VectorXd signs(static_cast<Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) signs[static_cast<Index>(k)] = sign(x[support[k]]);
  std::optional<Candidate> best;
  auto consider = [&](const VectorXd& full) {
    Candidate c;
    c.x = full;
    const VectorXd g = M.transpose() * (y - M * c.x);
    c.certificate = ls_frank_wolfe_gap(g, c.x, tau);
    if (!best || c.certificate < best->certificate) best = c;
  };
  for (int round = 0; round < 4; ++round) {
    Pattern p = factor_pattern(M, y, support, signs);
    if (!p.ok || p.support.empty()) return best;
    // Interior candidate: unconstrained least squares on the support.
    if (p.a.lpNorm<1>() <= tau) {
      consider(expand(p, p.a, M.cols()));
    }
    const double sb = p.signs.dot(p.b);
    if (!(sb > 0.0)) return best;
    const double nu = (p.signs.dot(p.a) - tau) / sb;
    if (nu < 0.0) return best;
    VectorXd xs = p.a - nu * p.b;
    std::vector<Index> keep;
    VectorXd keep_signs(static_cast<Index>(p.support.size()));
    Index n_keep = 0;
    for (std::size_t k = 0; k < p.support.size(); ++k) {
      if (xs[static_cast<Index>(k)] * p.signs[static_cast<Index>(k)] > 0.0) {
        keep.push_back(p.support[k]);
        keep_signs[n_keep++] = p.signs[static_cast<Index>(k)];
      }
    }
    if (keep.size() != p.support.size()) {
      if (keep.empty()) return best;
      support = std::move(keep);
      signs = keep_signs.head(n_keep);
      continue;
    }
    VectorXd full = expand(p, xs, M.cols());
    // Enforce feasibility exactly; the bordered solve meets it up to rounding.
    const double norm = full.lpNorm<1>();
    if (norm > tau && norm > 0.0) full *= tau / norm;
    consider(full);
    return best;
  }
  return best;
}

inline double relative_change(double previous, double current) {
  return std::abs(previous - current) / std::max({1e-300, std::abs(previous), std::abs(current)});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// (QP_lambda): argmin 0.5 ||y - Ax||^2 + lambda ||x||_1
// ---------------------------------------------------------------------------

/// Accelerated proximal gradient (FISTA) with step 1/L and restart on
/// objective increase. `warm_start` may be null.
inline SolveReport solve_qp(const MeasurementMatrix& A, const VectorXd& y, double lambda,
                            const SolverConfig& cfg, const VectorXd* warm_start = nullptr) {
  cfg.validate();
  if (!(lambda > 0.0)) throw std::invalid_argument("solve_qp: lambda must be positive");
  const MatrixXd& M = A.entries();
  if (y.size() != M.rows()) throw std::invalid_argument("solve_qp: y has wrong length");
  const Index N = M.cols();

  auto objective = [&](const VectorXd& Ax, const VectorXd& x) {
    return 0.5 * (y - Ax).squaredNorm() + lambda * x.lpNorm<1>();
  };

  SolveReport report;
  auto finish = [&](VectorXd x, int iterations) {
    const VectorXd Ax = M * x;
    const VectorXd g = M.transpose() * (y - Ax);
    report.certificate = detail::qp_kkt_violation(g, x, lambda);
    report.objective = objective(Ax, x);
    report.estimate = std::move(x);
    report.iterations = iterations;
    report.converged = report.certificate <= cfg.tol_cert;
    return report;
  };

  const VectorXd Aty = M.transpose() * y;
  if (Aty.lpNorm<Eigen::Infinity>() <= lambda) return finish(VectorXd::Zero(N), 0);

  VectorXd x = (warm_start && warm_start->size() == N) ? *warm_start : VectorXd::Zero(N);
  if (cfg.polish && warm_start) {
    if (auto c = detail::polish_qp(M, y, lambda, x); c && c->certificate <= cfg.tol_cert)
      return finish(std::move(c->x), 0);
  }

  double Lk = A.lipschitz();
  if (cfg.step_rule == StepRule::backtracking) Lk *= 0.25;
  if (!(Lk > 0.0)) return finish(VectorXd::Zero(N), 0);

  VectorXd Ax = M * x;
  double Fx = objective(Ax, x);
  VectorXd z = x, Az = Ax;
  double t = 1.0;
  int stagnant = 0;
  bool just_restarted = false;
  int it = 0;
  std::vector<Index> last_support = detail::support_of(x);
  int support_stable = 0;

  for (it = 1; it <= cfg.max_iters; ++it) {
    const VectorXd rz = Az - y;
    const VectorXd grad = M.transpose() * rz;
    VectorXd x_new;
    VectorXd Ax_new;
    for (;;) {
      x_new = soft_threshold(z - grad / Lk, lambda / Lk);
      Ax_new = M * x_new;
      if (cfg.step_rule != StepRule::backtracking) break;
      const VectorXd d = x_new - z;
      const double fz = 0.5 * rz.squaredNorm();
      const double quad = fz + grad.dot(d) + 0.5 * Lk * d.squaredNorm();
      if (0.5 * (Ax_new - y).squaredNorm() <= quad * (1.0 + 1e-12) || Lk >= A.lipschitz()) break;
      Lk = std::min(2.0 * Lk, A.lipschitz());
    }
    const double F_new = objective(Ax_new, x_new);
    if (F_new > Fx && !just_restarted) {
      t = 1.0;
      z = x;
      Az = Ax;
      just_restarted = true;
      continue;
    }
    just_restarted = false;
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_new;
    z = x_new + beta * (x_new - x);
    Az = Ax_new + beta * (Ax_new - Ax);
    const double change = detail::relative_change(Fx, F_new);
    x = std::move(x_new);
    Ax = std::move(Ax_new);
    Fx = F_new;
    t = t_new;
    stagnant = change < cfg.tol_rel_obj ? stagnant + 1 : 0;

    if (it % cfg.check_every == 0 || stagnant >= 50) {
      const VectorXd g = M.transpose() * (y - Ax);
      if (detail::qp_kkt_violation(g, x, lambda) <= cfg.tol_cert) break;
      std::vector<Index> support = detail::support_of(x);
      support_stable = support == last_support ? support_stable + 1 : 0;
      last_support = std::move(support);
      if (cfg.polish && (support_stable >= 2 || stagnant >= 50)) {
        if (auto c = detail::polish_qp(M, y, lambda, x); c && c->certificate <= cfg.tol_cert)
          return finish(std::move(c->x), it);
        support_stable = 0;
      }
      if (stagnant >= 50) break;
    }
  }
  return finish(std::move(x), std::min(it, cfg.max_iters));
}

inline SolveReport solve_qp(const ProblemInstance& instance, const VectorXd& y, double lambda,
                            const SolverConfig& cfg, const VectorXd* warm_start = nullptr) {
  return solve_qp(instance.A, y, lambda, cfg, warm_start);
}

// ---------------------------------------------------------------------------
// (LS_tau): argmin { ||y - Ax||^2 : ||x||_1 <= tau }
// ---------------------------------------------------------------------------

/// Projected accelerated gradient onto tau B_1 with restart on objective
/// increase; the certificate is the Frank-Wolfe gap.
inline SolveReport solve_ls(const MeasurementMatrix& A, const VectorXd& y, double tau,
                            const SolverConfig& cfg, const VectorXd* warm_start = nullptr) {
  cfg.validate();
  if (!(tau >= 0.0)) throw std::invalid_argument("solve_ls: tau must be >= 0");
  const MatrixXd& M = A.entries();
  if (y.size() != M.rows()) throw std::invalid_argument("solve_ls: y has wrong length");
  const Index N = M.cols();

  SolveReport report;
  auto finish = [&](VectorXd x, int iterations) {
    const double norm = x.lpNorm<1>();
    if (norm > tau) x = project_l1_ball(x, tau);
    const VectorXd Ax = M * x;
    const VectorXd g = M.transpose() * (y - Ax);
    report.certificate = detail::ls_frank_wolfe_gap(g, x, tau);
    report.objective = (y - Ax).squaredNorm();
    report.estimate = std::move(x);
    report.iterations = iterations;
    report.converged = report.certificate <= cfg.tol_cert;
    return report;
  };

  if (tau == 0.0) return finish(VectorXd::Zero(N), 0);

  VectorXd x = (warm_start && warm_start->size() == N) ? project_l1_ball(*warm_start, tau)
                                                       : VectorXd::Zero(N);
  if (cfg.polish && warm_start) {
    if (auto c = detail::polish_ls(M, y, tau, x); c && c->certificate <= cfg.tol_cert)
      return finish(std::move(c->x), 0);
  }

  // f(x) = ||y - Ax||^2 has gradient Lipschitz constant 2 ||A||^2.
  const double L_full = 2.0 * A.lipschitz();
  double Lk = cfg.step_rule == StepRule::backtracking ? 0.25 * L_full : L_full;
  if (!(Lk > 0.0)) return finish(VectorXd::Zero(N), 0);

  VectorXd Ax = M * x;
  double Fx = (y - Ax).squaredNorm();
  VectorXd z = x, Az = Ax;
  double t = 1.0;
  int stagnant = 0;
  bool just_restarted = false;
  int it = 0;
  std::vector<Index> last_support = detail::support_of(x);
  int support_stable = 0;

  for (it = 1; it <= cfg.max_iters; ++it) {
    const VectorXd rz = Az - y;
    const VectorXd grad = 2.0 * (M.transpose() * rz);
    VectorXd x_new;
    VectorXd Ax_new;
    for (;;) {
      x_new = project_l1_ball(z - grad / Lk, tau);
      Ax_new = M * x_new;
      if (cfg.step_rule != StepRule::backtracking) break;
      const VectorXd d = x_new - z;
      const double quad = rz.squaredNorm() + grad.dot(d) + 0.5 * Lk * d.squaredNorm();
      if ((Ax_new - y).squaredNorm() <= quad * (1.0 + 1e-12) || Lk >= L_full) break;
      Lk = std::min(2.0 * Lk, L_full);
    }
    const double F_new = (y - Ax_new).squaredNorm();
    if (F_new > Fx && !just_restarted) {
      t = 1.0;
      z = x;
      Az = Ax;
      just_restarted = true;
      continue;
    }
    just_restarted = false;
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_new;
    z = x_new + beta * (x_new - x);
    Az = Ax_new + beta * (Ax_new - Ax);
    const double change = detail::relative_change(Fx, F_new);
    x = std::move(x_new);
    Ax = std::move(Ax_new);
    Fx = F_new;
    t = t_new;
    stagnant = change < cfg.tol_rel_obj ? stagnant + 1 : 0;

    if (it % cfg.check_every == 0 || stagnant >= 50) {
      const VectorXd g = M.transpose() * (y - Ax);
      if (detail::ls_frank_wolfe_gap(g, x, tau) <= cfg.tol_cert) break;
      std::vector<Index> support = detail::support_of(x);
      support_stable = support == last_support ? support_stable + 1 : 0;
      last_support = std::move(support);
      if (cfg.polish && (support_stable >= 2 || stagnant >= 50)) {
        if (auto c = detail::polish_ls(M, y, tau, x); c && c->certificate <= cfg.tol_cert)
          return finish(std::move(c->x), it);
        support_stable = 0;
      }
      if (stagnant >= 50) break;
    }
  }
  return finish(std::move(x), std::min(it, cfg.max_iters));
}

inline SolveReport solve_ls(const ProblemInstance& instance, const VectorXd& y, double tau,
                            const SolverConfig& cfg, const VectorXd* warm_start = nullptr) {
  return solve_ls(instance.A, y, tau, cfg, warm_start);
}

// ---------------------------------------------------------------------------
// (BP_sigma): argmin { ||x||_1 : ||y - Ax||_2 <= sigma }
// ---------------------------------------------------------------------------

namespace detail {

/// Solves || y - A x(lambda) || = sigma exactly on the sign pattern of `x`,
/// where x(lambda) is affine in lambda, and keeps the result only if it is
/// a certified QP solution.
inline std::optional<std::pair<double, Candidate>> bp_segment_solve(const MatrixXd& M,
                                                                    const VectorXd& y,
                                                                    const VectorXd& x,
                                                                    double sigma, double lam_lo,
                                                                    double lam_hi,
                                                                    double tol_qp) {
  std::vector<Index> support = support_of(x);
  if (support.empty()) return std::nullopt;
  VectorXd signs(static_cast<Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) signs[static_cast<Index>(k)] = sign(x[support[k]]);
  Pattern p = factor_pattern(M, y, support, signs);
  if (!p.ok) return std::nullopt;
  const VectorXd r0 = y - p.AS * p.a;
  const VectorXd d = p.AS * p.b;
  // ||r0 + lambda d||^2 = sigma^2
  const double qa = d.squaredNorm();
  const double qb = 2.0 * r0.dot(d);
  const double qc = r0.squaredNorm() - sigma * sigma;
  if (!(qa > 0.0)) return std::nullopt;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) return std::nullopt;
  const double lam = std::max(0.0, (-qb + std::sqrt(disc)) / (2.0 * qa));
  if (lam > lam_hi * (1.0 + 1e-12) || lam < 0.0 || lam < lam_lo * 0.0) return std::nullopt;
  const VectorXd xs = p.a - lam * p.b;
  for (Index k = 0; k < xs.size(); ++k)
    if (!(xs[k] * p.signs[k] > 0.0)) return std::nullopt;
  Candidate c;
  c.x = expand(p, xs, M.cols());
  const VectorXd g = M.transpose() * (y - M * c.x);
  c.certificate = qp_kkt_violation(g, c.x, lam);
  if (!(c.certificate <= tol_qp)) return std::nullopt;
  return std::make_pair(lam, std::move(c));
}

}  // namespace detail

/// Root-finding on the nondecreasing residual map lambda -> ||y - A x#(lambda)||
/// (geometric bisection), finished by an exact solve on the bracketing sign
/// pattern when one certifies.
inline SolveReport solve_bp(const MeasurementMatrix& A, const VectorXd& y, double sigma,
                            const SolverConfig& cfg) {
  cfg.validate();
  if (!(sigma >= 0.0)) throw std::invalid_argument("solve_bp: sigma must be >= 0");
  const MatrixXd& M = A.entries();
  if (y.size() != M.rows()) throw std::invalid_argument("solve_bp: y has wrong length");
  const Index N = M.cols();
  const double y_norm = y.norm();

  SolveReport report;
  int total_iters = 0;
  auto finish = [&](VectorXd x, double lambda, bool qp_ok) {
    report.objective = x.lpNorm<1>();
    const double residual = (y - M * x).norm();
    report.certificate = std::abs(residual - sigma);
    report.estimate = std::move(x);
    report.iterations = total_iters;
    report.lambda = lambda;
    report.converged = qp_ok && report.certificate <= cfg.tol_cert * std::max(1.0, sigma);
    return report;
  };

  if (sigma >= y_norm) {
    report.objective = 0.0;
    report.estimate = VectorXd::Zero(N);
    report.certificate = 0.0;
    report.converged = true;
    report.lambda = (M.transpose() * y).lpNorm<Eigen::Infinity>();
    return report;
  }

  const double tol = cfg.tol_cert * std::max(1.0, sigma);
  struct Point {
    double lambda;
    VectorXd x;
    double residual;
    bool ok;
  };
  auto solve_at = [&](double lambda, const VectorXd* warm) {
    SolveReport r = solve_qp(A, y, lambda, cfg, warm);
    total_iters += r.iterations;
    const double res = (y - M * r.estimate).norm();
    return Point{lambda, std::move(r.estimate), res, r.converged};
  };

  const double lambda_max = (M.transpose() * y).lpNorm<Eigen::Infinity>();
  Point hi{lambda_max, VectorXd::Zero(N), y_norm, true};
  std::optional<Point> lo;
  double min_residual = y_norm;
  const double lambda_floor = lambda_max * 1e-14;

  for (double lam = lambda_max / 10.0; lam >= lambda_floor; lam /= 10.0) {
    Point p = solve_at(lam, &hi.x);
    min_residual = std::min(min_residual, p.residual);
    if (std::abs(p.residual - sigma) <= tol) return finish(std::move(p.x), p.lambda, p.ok);
    if (p.residual < sigma) {
      lo = std::move(p);
      break;
    }
    // Still above sigma: the exact pattern solve may reach it below lam.
    if (auto seg = detail::bp_segment_solve(M, y, p.x, sigma, 0.0, p.lambda, cfg.tol_cert)) {
      const double res = (y - M * seg->second.x).norm();
      if (std::abs(res - sigma) <= tol) return finish(std::move(seg->second.x), seg->first, true);
    }
    hi = std::move(p);
  }
  if (!lo) throw InfeasibleSigma(sigma, min_residual);

  for (int step = 0; step < 200; ++step) {
    for (const Point* ref : {&*lo, &hi}) {
      if (auto seg = detail::bp_segment_solve(M, y, ref->x, sigma, lo->lambda, hi.lambda,
                                              cfg.tol_cert)) {
        const double res = (y - M * seg->second.x).norm();
        if (std::abs(res - sigma) <= tol) return finish(std::move(seg->second.x), seg->first, true);
      }
    }
    const double mid = std::sqrt(lo->lambda * hi.lambda);
    const VectorXd& warm = (std::log(mid / lo->lambda) < std::log(hi.lambda / mid)) ? lo->x : hi.x;
    Point p = solve_at(mid, &warm);
    if (std::abs(p.residual - sigma) <= tol) return finish(std::move(p.x), p.lambda, p.ok);
    if (p.residual > sigma)
      hi = std::move(p);
    else
      lo = std::move(p);
    if (hi.lambda / lo->lambda < 1.0 + 1e-15) break;
  }
  // Bracket collapsed without meeting the tolerance; return the closer end.
  Point& best = std::abs(lo->residual - sigma) <= std::abs(hi.residual - sigma) ? *lo : hi;
  return finish(std::move(best.x), best.lambda, best.ok);
}

inline SolveReport solve_bp(const ProblemInstance& instance, const VectorXd& y, double sigma,
                            const SolverConfig& cfg) {
  return solve_bp(instance.A, y, sigma, cfg);
}

}  // namespace lassolab

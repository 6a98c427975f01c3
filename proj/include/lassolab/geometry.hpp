#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lassolab/model.hpp"
#include "lassolab/parallel.hpp"
#include "lassolab/random.hpp"
#include "lassolab/solvers.hpp"

namespace lassolab {

struct WidthEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int samples = 0;
  int dropped = 0;
  std::string set_descriptor;
};

namespace detail {

inline WidthEstimate summarize(const std::vector<double>& values, std::string descriptor) {
  WidthEstimate w;
  w.set_descriptor = std::move(descriptor);
  std::vector<double> kept;
  for (double v : values)
    if (!std::isnan(v)) kept.push_back(v);
  w.samples = static_cast<int>(kept.size());
  w.dropped = static_cast<int>(values.size() - kept.size());
  if (kept.empty()) return w;
  const double n = static_cast<double>(kept.size());
  for (double v : kept) w.mean += v;
  w.mean /= n;
  if (kept.size() > 1) {
    double ss = 0.0;
    for (double v : kept) ss += (v - w.mean) * (v - w.mean);
    w.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return w;
}

/// Magnitudes of g sorted in decreasing order.
inline std::vector<double> sorted_magnitudes(const VectorXd& g) {
  std::vector<double> a(static_cast<std::size_t>(g.size()));
  for (Index i = 0; i < g.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(g[i]);
  std::sort(a.begin(), a.end(), std::greater<>());
  return a;
}

}  // namespace detail

/// sup over Sigma_s cap B_2 of <x, g>: the l2 norm of the s largest |g_i|.
inline double sparse_cap_support(const VectorXd& g, Index s) {
  if (s < 1 || s > g.size()) throw std::invalid_argument("sparse_cap_support: need 1 <= s <= N");
  std::vector<double> a(static_cast<std::size_t>(g.size()));
  for (Index i = 0; i < g.size(); ++i) a[static_cast<std::size_t>(i)] = g[i] * g[i];
  std::nth_element(a.begin(), a.begin() + (s - 1), a.end(), std::greater<>());
  double total = 0.0;
  for (Index i = 0; i < s; ++i) total += a[static_cast<std::size_t>(i)];
  return std::sqrt(total);
}

/// sup over K_s = B_2 cap sqrt(s) B_1 of <x, g>, computed as
/// min_{t >= 0} ||soft_t(g)||_2 + sqrt(s) t (support function of an intersection).
inline double ks_support(const VectorXd& g, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("ks_support: s must be positive");
  const std::vector<double> a = detail::sorted_magnitudes(g);
  const std::size_t n = a.size();
  if (n == 0 || a[0] == 0.0) return 0.0;
  std::vector<double> S1(n + 1, 0.0), S2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    S1[i + 1] = S1[i] + a[i];
    S2[i + 1] = S2[i] + a[i] * a[i];
  }
  const double rs = std::sqrt(s);
  // f(t) with k = #{a_i > t}: sqrt(S2_k - 2 t S1_k + k t^2) + sqrt(s) t.
  auto f = [&](double t) {
    const std::size_t k = static_cast<std::size_t>(
        std::upper_bound(a.begin(), a.end(), t, std::greater<>()) - a.begin());
    const double r2 = S2[k] - 2.0 * t * S1[k] + static_cast<double>(k) * t * t;
    return std::sqrt(std::max(r2, 0.0)) + rs * t;
  };
  // Convex in t: locate the best breakpoint, then refine between neighbours.
  std::size_t best = 0;
  double best_val = f(a[0]);
  for (std::size_t i = 1; i < n; ++i) {
    const double v = f(a[i]);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  const double at_zero = f(0.0);
  double lo = best + 1 < n ? a[best + 1] : 0.0;
  double hi = best > 0 ? a[best - 1] : a[0];
  if (at_zero < best_val) {
    lo = 0.0;
    hi = a[n - 1];
  }
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, a[0]); ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({best_val, at_zero, f1, f2});
}

/// Monte-Carlo E sup_{x in T} <x, g> for g ~ N(0, I_N), with per-sample
/// seeds so the estimate does not depend on the worker count.
inline WidthEstimate mc_width(Index N, int samples, std::uint64_t seed,
                              const std::function<double(const VectorXd&)>& sup,
                              std::string descriptor, unsigned workers = 1) {
  if (samples < 1) throw std::invalid_argument("mc_width: samples must be >= 1");
  std::vector<double> values(static_cast<std::size_t>(samples));
  parallel_for(values.size(), workers, [&](std::size_t t) {
    Engine engine = make_engine(seed, Stream::width, t);
    values[t] = sup(standard_normal_vector(N, engine));
  });
  return detail::summarize(values, std::move(descriptor));
}

inline WidthEstimate gw_sparse_cap(Index s, Index N, int samples, std::uint64_t seed, unsigned workers = 1) {
  if (s < 1 || s > N) throw std::invalid_argument("gw_sparse_cap: need 1 <= s <= N");
  return mc_width(N, samples, seed, [s](const VectorXd& g) { return sparse_cap_support(g, s); },
                  "sparse_cap(" + std::to_string(s) + "," + std::to_string(N) + ")", workers);
}

/// Gaussian complexity E sup |<x, g>| of the sparse cap.
inline WidthEstimate gc_sparse_cap(Index s, Index N, int samples, std::uint64_t seed, unsigned workers = 1) {
  if (s < 1 || s > N) throw std::invalid_argument("gc_sparse_cap: need 1 <= s <= N");
  return mc_width(
      N, samples, seed,
      [s](const VectorXd& g) { return std::max(sparse_cap_support(g, s), sparse_cap_support(-g, s)); },
      "sparse_cap_complexity(" + std::to_string(s) + "," + std::to_string(N) + ")", workers);
}

inline WidthEstimate gw_ks(Index s, Index N, int samples, std::uint64_t seed, unsigned workers = 1) {
  if (s < 1 || s > N) throw std::invalid_argument("gw_ks: need 1 <= s <= N");
  return mc_width(N, samples, seed, [s](const VectorXd& g) { return ks_support(g, static_cast<double>(s)); },
                  "ks(" + std::to_string(s) + "," + std::to_string(N) + ")", workers);
}

struct DeviationResult {
  double value = 0.0;    // max of the two below
  double sampled = 0.0;  // over random unit s-sparse vectors
  double exhaustive = std::numeric_limits<double>::quiet_NaN();
  bool exhaustive_done = false;
};

inline double binomial(Index n, Index k) {
  double r = 1.0;
  for (Index i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

/// Largest observed | ||Ax||_2 - 1 | over unit s-sparse x. When at most 1e4
/// supports exist, every support is also checked exactly through the
/// extreme singular values of A_S.
inline DeviationResult deviation_check(const MeasurementMatrix& A, Index s, int samples, std::uint64_t seed) {
  const Index N = A.cols();
  if (s < 1 || s > N) throw std::invalid_argument("deviation_check: need 1 <= s <= N");
  const MatrixXd& M = A.entries();
  DeviationResult out;
  for (int t = 0; t < samples; ++t) {
    Engine engine = make_engine(seed, Stream::deviation, static_cast<std::uint64_t>(t));
    const auto support = random_support(N, s, engine);
    VectorXd coef = standard_normal_vector(s, engine);
    coef.normalize();
    VectorXd Ax = VectorXd::Zero(M.rows());
    for (Index i = 0; i < s; ++i) Ax += coef[i] * M.col(support[static_cast<std::size_t>(i)]);
    out.sampled = std::max(out.sampled, std::abs(Ax.norm() - 1.0));
  }
  out.value = out.sampled;
  if (binomial(N, s) <= 1e4) {
    double worst = 0.0;
    std::vector<Index> idx(static_cast<std::size_t>(s));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (;;) {
      const MatrixXd AS = detail::gather_columns(M, idx);
      Eigen::JacobiSVD<MatrixXd> svd(AS);
      const auto& sv = svd.singularValues();
      const double smax = sv.size() > 0 ? sv[0] : 0.0;
      // Fewer rows than s leaves a null direction: singular value 0.
      const double smin = AS.rows() < s ? 0.0 : sv[sv.size() - 1];
      worst = std::max({worst, std::abs(smax - 1.0), std::abs(smin - 1.0)});
      Index pos = s - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == N - s + pos) --pos;
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
      for (Index q = pos + 1; q < s; ++q) idx[static_cast<std::size_t>(q)] = idx[static_cast<std::size_t>(q - 1)] + 1;
    }
    out.exhaustive = worst;
    out.exhaustive_done = true;
    out.value = std::max(out.value, worst);
  }
  return out;
}

/// sup over q in cvx{+-A^j} cap alpha B_2 of <q, g>. The maximizer is
/// P_T(t g) for the scale t at which its norm reaches alpha, found by
/// bisection; P_T is an (LS) solve with tau = 1.
inline double hull_cap_support(const MeasurementMatrix& A, const VectorXd& g, double alpha,
                               const SolverConfig& cfg) {
  const MatrixXd& M = A.entries();
  const VectorXd c = M.transpose() * g;
  Index jstar = 0;
  c.cwiseAbs().maxCoeff(&jstar);
  if (M.col(jstar).norm() <= alpha) return std::abs(c[jstar]);

  auto project = [&](double t, SolveReport& r, const VectorXd* warm) {
    r = solve_ls(A, VectorXd(t * g), 1.0, cfg, warm);
    return VectorXd(M * r.estimate);
  };
  // A solve that stalls (near-degenerate directions at large t) ends the
  // search; the last feasible point still certifies a lower bound.
  SolveReport r;
  double lo = 0.0, hi = alpha / g.norm();
  VectorXd q = project(hi, r, nullptr);
  if (q.norm() > alpha) q *= alpha / q.norm();
  VectorXd best = q;
  if (!r.converged) return best.dot(g);
  // ||P_T(t g)|| <= t ||g||, so hi starts feasible; grow until it is not.
  VectorXd warm = r.estimate;
  while (q.norm() < alpha) {
    lo = hi;
    best = q;
    hi *= 2.0;
    q = project(hi, r, &warm);
    if (!r.converged) return (q.norm() <= alpha ? q : best).dot(g);
    warm = r.estimate;
    if (hi > 1e12 * alpha / g.norm()) return q.dot(g);
  }
  for (int it = 0; it < 60 && hi - lo > 1e-10 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    q = project(mid, r, &warm);
    if (!r.converged) return std::max(best.dot(g), q.norm() <= alpha ? q.dot(g) : -1e300);
    warm = r.estimate;
    if (q.norm() <= alpha) {
      lo = mid;
      best = q;
    } else {
      hi = mid;
    }
  }
  return best.dot(g);
}

/// Monte-Carlo width of cvx{+-A^j} cap alpha B_2^m (lower-bound semantics:
/// every sample value is attained by a feasible point).
inline WidthEstimate random_hull_width(const MeasurementMatrix& A, double alpha, int samples,
                                       std::uint64_t seed, unsigned workers = 1,
                                       SolverConfig cfg = {}) {
  if (!(alpha > 0.0)) throw std::invalid_argument("random_hull_width: alpha must be positive");
  cfg.tol_cert = std::min(cfg.tol_cert, 1e-8);
  return mc_width(A.rows(), samples, seed,
                  [&](const VectorXd& g) { return hull_cap_support(A, g, alpha, cfg); },
                  "random_hull_cap(" + std::to_string(alpha) + ")", workers);
}

/// ||h_{T^c}||_1 <= -<sgn(x), h> + 1e-10, with T the support of x.
inline bool descent_cone_member(const SparseSignal& x, const VectorXd& h) {
  if (x.support.empty()) throw std::invalid_argument("descent_cone_member: x has empty support");
  if (h.size() != x.size()) throw std::invalid_argument("descent_cone_member: length mismatch");
  std::vector<bool> on(static_cast<std::size_t>(h.size()), false);
  double inner = 0.0;
  for (Index i : x.support) {
    on[static_cast<std::size_t>(i)] = true;
    inner += (x.values[i] > 0 ? 1.0 : (x.values[i] < 0 ? -1.0 : 0.0)) * h[i];
  }
  double off = 0.0;
  for (Index i = 0; i < h.size(); ++i)
    if (!on[static_cast<std::size_t>(i)]) off += std::abs(h[i]);
  return off <= -inner + 1e-10;
}

}  // namespace lassolab

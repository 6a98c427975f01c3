#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "lassolab/equivalence.hpp"

namespace lassolab {

/// Multiquadric kernel sqrt(1 + (|u - v| / eps)^2).
inline double kernel_eval(double u, double v, double epsilon) {
  const double r = (u - v) / epsilon;
  return std::sqrt(1.0 + r * r);
}

/// Sign of the diagonal shift in the fit system (X -/+ mu I) w = y. Since
/// the multiquadric matrix is conditionally negative definite, subtracting
/// mu moves its negative eigenvalues away from zero.
enum class RidgeSign { minus, plus };

inline std::string_view to_string(RidgeSign s) { return s == RidgeSign::minus ? "minus" : "plus"; }

inline RidgeSign parse_ridge_sign(std::string_view s) {
  if (s == "minus") return RidgeSign::minus;
  if (s == "plus") return RidgeSign::plus;
  throw std::invalid_argument("unknown ridge sign: " + std::string(s));
}

class IllConditioned : public std::runtime_error {
 public:
  explicit IllConditioned(double rcond)
      : std::runtime_error("rbf fit: system is singular or ill-conditioned (rcond estimate " +
                           std::to_string(rcond) + ")"),
        rcond_(rcond) {}
  double rcond() const { return rcond_; }

 private:
  double rcond_;
};

struct RbfModel {
  VectorXd nodes;
  VectorXd coefficients;
  double epsilon = 1.0;
  double mu = 0.0;
  RidgeSign ridge = RidgeSign::minus;
  double rcond = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(nodes.size()); }
};

inline MatrixXd kernel_matrix(const VectorXd& rows, const VectorXd& cols, double epsilon) {
  MatrixXd X(rows.size(), cols.size());
  for (Index j = 0; j < cols.size(); ++j)
    for (Index i = 0; i < rows.size(); ++i) X(i, j) = kernel_eval(rows[i], cols[j], epsilon);
  return X;
}

/// Fits w from (X -/+ mu I) w = y with X_ij = kernel(node_i, node_j).
/// Repeated nodes are separated by multiples of 1e-12 relative.
inline RbfModel fit(VectorXd nodes, const VectorXd& values, double epsilon, double mu,
                    RidgeSign ridge = RidgeSign::minus) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("rbf fit: epsilon must be positive");
  if (!(mu >= 0.0)) throw std::invalid_argument("rbf fit: mu must be >= 0");
  if (nodes.size() != values.size()) throw std::invalid_argument("rbf fit: nodes/values length mismatch");
  if (!nodes.allFinite() || !values.allFinite()) throw std::invalid_argument("rbf fit: non-finite input");

  // Jitter duplicates deterministically, in order of first appearance.
  std::vector<Index> order(static_cast<std::size_t>(nodes.size()));
  for (Index i = 0; i < nodes.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return nodes[a] < nodes[b]; });
  const double scale = nodes.size() > 0 ? std::max(nodes.cwiseAbs().maxCoeff(), 1e-300) : 1.0;
  std::size_t distinct = nodes.size() > 0 ? 1 : 0;
  for (std::size_t a = 1; a < order.size(); ++a) {
    const double prev = nodes[order[a - 1]];
    double& here = nodes[order[a]];
    if (here > prev) {
      ++distinct;
      continue;
    }
    if (here < prev) ++distinct;  // overtaken by an earlier jittered run
    here = prev + 1e-12 * (here != 0.0 ? std::abs(here) : scale);
  }
  if (distinct < 2) throw std::invalid_argument("rbf fit: need at least 2 distinct nodes");

  RbfModel model;
  model.nodes = std::move(nodes);
  model.epsilon = epsilon;
  model.mu = mu;
  model.ridge = ridge;
  MatrixXd system = kernel_matrix(model.nodes, model.nodes, epsilon);
  const double shift = ridge == RidgeSign::minus ? -mu : mu;
  system.diagonal().array() += shift;

  Eigen::PartialPivLU<MatrixXd> lu(system);
  model.rcond = lu.rcond();
  if (!(model.rcond > 1e-15)) throw IllConditioned(model.rcond);
  VectorXd w = lu.solve(values);
  const double target = 1e-6 * std::max(values.norm(), std::numeric_limits<double>::min());
  VectorXd residual = values - system * w;
  for (int refine = 0; refine < 3 && residual.norm() > target; ++refine) {
    w += lu.solve(residual);
    residual = values - system * w;
  }
  if (!(residual.norm() <= target) && values.norm() > 0.0) throw IllConditioned(model.rcond);
  model.coefficients = std::move(w);
  return model;
}

inline double evaluate(const RbfModel& model, double x) {
  double total = 0.0;
  for (Index j = 0; j < model.nodes.size(); ++j)
    total += kernel_eval(x, model.nodes[j], model.epsilon) * model.coefficients[j];
  return total;
}

inline VectorXd evaluate(const RbfModel& model, const VectorXd& xs) {
  VectorXd out(xs.size());
  for (Index i = 0; i < xs.size(); ++i) out[i] = evaluate(model, xs[i]);
  return out;
}

struct RbfOptimum {
  double upsilon = 0.0;
  double value = 0.0;
  bool boundary = false;  // minimum at the bracket edge or in an outermost node gap
};

/// Global minimum over [lo, hi]: 2048-point log scan refined by golden
/// section in log coordinates to 1e-6 relative.
inline RbfOptimum find_optimum(const RbfModel& model, double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("find_optimum: need 0 < lo < hi");
  constexpr Index scan = 2048;
  const VectorXd grid = log_grid(lo, hi, scan);
  const VectorXd vals = evaluate(model, grid);
  Index best = 0;
  for (Index i = 1; i < scan; ++i)
    if (vals[i] < vals[best]) best = i;

  RbfOptimum out;
  out.boundary = best == 0 || best == scan - 1;
  double a = std::log(grid[std::max<Index>(best - 1, 0)]);
  double c = std::log(grid[std::min<Index>(best + 1, scan - 1)]);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto f = [&](double t) { return evaluate(model, std::exp(t)); };
  double x1 = c - inv_phi * (c - a), x2 = a + inv_phi * (c - a);
  double f1 = f(x1), f2 = f(x2);
  while (c - a > 1e-6) {
    if (f1 < f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - inv_phi * (c - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (c - a);
      f2 = f(x2);
    }
  }
  out.upsilon = grid[best];
  out.value = vals[best];
  for (auto [t, v] : {std::pair{x1, f1}, std::pair{x2, f2}}) {
    if (v < out.value) {
      out.value = v;
      out.upsilon = std::exp(t);
    }
  }
  if (model.nodes.size() >= 4) {
    std::vector<double> sorted(model.nodes.data(), model.nodes.data() + model.nodes.size());
    std::sort(sorted.begin(), sorted.end());
    const double inner_lo = std::max(lo, sorted[1]), inner_hi = std::min(hi, sorted[sorted.size() - 2]);
    if (inner_lo < inner_hi && (out.upsilon < inner_lo || out.upsilon > inner_hi)) out.boundary = true;
  }
  return out;
}

/// Fitted curve read at rho * upsilon_dagger.
struct NormalizedCurve {
  double upsilon_dagger = 0.0;
  VectorXd rho_grid;
  VectorXd values;
};

inline NormalizedCurve normalized_curve(const RbfModel& model, double upsilon_dagger,
                                        const VectorXd& rho_grid) {
  NormalizedCurve c;
  c.upsilon_dagger = upsilon_dagger;
  c.rho_grid = rho_grid;
  c.values = evaluate(model, VectorXd(rho_grid * upsilon_dagger));
  return c;
}

inline nlohmann::json to_json(const RbfModel& model) {
  nlohmann::json j;
  j["kernel"] = "multiquadric";
  j["epsilon"] = model.epsilon;
  j["mu"] = model.mu;
  j["ridge"] = std::string(to_string(model.ridge));
  j["rcond"] = model.rcond;
  j["nodes"] = std::vector<double>(model.nodes.data(), model.nodes.data() + model.nodes.size());
  j["coefficients"] =
      std::vector<double>(model.coefficients.data(), model.coefficients.data() + model.coefficients.size());
  return j;
}

inline RbfModel rbf_from_json(const nlohmann::json& j) {
  RbfModel m;
  m.epsilon = j.at("epsilon").get<double>();
  m.mu = j.at("mu").get<double>();
  m.ridge = parse_ridge_sign(j.at("ridge").get<std::string>());
  m.rcond = j.value("rcond", 0.0);
  const auto nodes = j.at("nodes").get<std::vector<double>>();
  const auto coeffs = j.at("coefficients").get<std::vector<double>>();
  if (nodes.size() != coeffs.size()) throw std::invalid_argument("rbf json: nodes/coefficients mismatch");
  m.nodes = Eigen::Map<const VectorXd>(nodes.data(), static_cast<Index>(nodes.size()));
  m.coefficients = Eigen::Map<const VectorXd>(coeffs.data(), static_cast<Index>(coeffs.size()));
  return m;
}

}  // namespace lassolab

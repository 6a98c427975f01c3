#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lassolab/linalg.hpp"
#include "lassolab/random.hpp"

namespace lassolab {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Sparse ground truth
// ---------------------------------------------------------------------------

/// An s-sparse vector together with its support.
struct SparseSignal {
  VectorXd values;
  std::vector<Index> support;  // sorted ascending
  Index sparsity = 0;

  Index size() const { return values.size(); }
  double l1_norm() const { return values.lpNorm<1>(); }

  static SparseSignal from_values(const VectorXd& values) {
    SparseSignal out;
    out.values = values;
    for (Index i = 0; i < values.size(); ++i)
      if (values[i] != 0.0) out.support.push_back(i);
    out.sparsity = static_cast<Index>(out.support.size());
    return out;
  }
};

struct SupportRule {
  enum class Kind { first_s, random } kind = Kind::first_s;
  std::uint64_t seed = 0;

  static SupportRule first_s() { return {}; }
  static SupportRule random(std::uint64_t seed) { return {Kind::random, seed}; }
};

/// Draws `s` distinct indices from [0, N) (partial Fisher-Yates), sorted.
inline std::vector<Index> random_support(Index N, Index s, Engine& engine) {
  std::vector<Index> pool(static_cast<std::size_t>(N));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < s; ++i) {
    std::uniform_int_distribution<Index> pick(i, N - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(engine))]);
  }
  std::vector<Index> support(pool.begin(), pool.begin() + s);
  std::sort(support.begin(), support.end());
  return support;
}

/// Signal with exactly `s` nonzero entries, each equal to `magnitude`.
inline SparseSignal make_sparse_signal(Index N, Index s, double magnitude,
                                       SupportRule rule = SupportRule::first_s()) {
  if (N < 0 || s < 0) throw std::invalid_argument("make_sparse_signal: negative dimension");
  if (s > N) throw std::invalid_argument("make_sparse_signal: s > N");
  if (!std::isfinite(magnitude)) throw std::invalid_argument("make_sparse_signal: magnitude not finite");

  SparseSignal out;
  out.values = VectorXd::Zero(N);
  out.sparsity = s;
  if (rule.kind == SupportRule::Kind::first_s) {
    out.support.resize(static_cast<std::size_t>(s));
    std::iota(out.support.begin(), out.support.end(), Index{0});
  } else {
    Engine engine = make_engine(rule.seed, Stream::support);
    out.support = random_support(N, s, engine);
  }
  if (magnitude != 0.0)
    for (Index i : out.support) out.values[i] = magnitude;
  return out;
}

// ---------------------------------------------------------------------------
// Measurement matrices
// ---------------------------------------------------------------------------

enum class Ensemble { gaussian, rademacher, custom };

inline std::string_view to_string(Ensemble e) {
  switch (e) {
    case Ensemble::gaussian: return "gaussian";
    case Ensemble::rademacher: return "rademacher";
    case Ensemble::custom: return "custom";
  }
  return "unknown";
}

inline Ensemble parse_ensemble(std::string_view name) {
  if (name == "gaussian") return Ensemble::gaussian;
  if (name == "rademacher") return Ensemble::rademacher;
  throw std::invalid_argument("unknown ensemble: " + std::string(name));
}

/// Dense m x N measurement matrix. Immutable after construction; the squared
/// operator norm is computed once here since every solver needs it.
class MeasurementMatrix {
 public:
  MeasurementMatrix() = default;

  static MeasurementMatrix from_entries(MatrixXd entries) {
    return MeasurementMatrix(std::move(entries), Ensemble::custom, false, 0);
  }

  const MatrixXd& entries() const { return entries_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  Ensemble ensemble() const { return ensemble_; }
  bool normalized() const { return normalized_; }
  std::uint64_t seed() const { return seed_; }
  /// Upper bound on ||A||_2^2 (gradient Lipschitz constant of 0.5||Ax - y||^2).
  double lipschitz() const { return lipschitz_; }

  MeasurementMatrix(MatrixXd entries, Ensemble ensemble, bool normalized, std::uint64_t seed)
      : entries_(std::move(entries)),
        ensemble_(ensemble),
        normalized_(normalized),
        seed_(seed),
        lipschitz_(operator_norm_sq(entries_)) {}

 private:
  MatrixXd entries_;
  Ensemble ensemble_ = Ensemble::custom;
  bool normalized_ = false;
  std::uint64_t seed_ = 0;
  double lipschitz_ = 0.0;
};

/// Normalized subgaussian matrix: rows are isotropic draws scaled by 1/sqrt(m).
/// Column j is generated from its own counter-derived stream.
inline MeasurementMatrix make_matrix(Index m, Index N, Ensemble ensemble, std::uint64_t seed) {
  if (m < 1 || N < 1) throw std::invalid_argument("make_matrix: dimensions must be >= 1");
  if (ensemble == Ensemble::custom)
    throw std::invalid_argument("make_matrix: custom ensemble has no generator");
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  MatrixXd entries(m, N);
  for (Index j = 0; j < N; ++j) {
    Engine engine = make_engine(seed, Stream::matrix, static_cast<std::uint64_t>(j));
    if (ensemble == Ensemble::gaussian) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Index i = 0; i < m; ++i) entries(i, j) = scale * normal(engine);
    } else {
      std::bernoulli_distribution coin(0.5);
      for (Index i = 0; i < m; ++i) entries(i, j) = coin(engine) ? scale : -scale;
    }
  }
  return MeasurementMatrix(std::move(entries), ensemble, true, seed);
}

// ---------------------------------------------------------------------------
// Problem instances and noise
// ---------------------------------------------------------------------------

struct ProblemInstance {
  SparseSignal x0;
  MeasurementMatrix A;
  double eta = 1.0;
  std::uint64_t noise_seed = 0;

  Index m() const { return A.rows(); }
  Index N() const { return A.cols(); }
};

/// Standard normal noise vector j of the stream rooted at `seed`.
inline VectorXd make_noise(Index m, std::uint64_t seed, std::uint64_t index) {
  Engine engine = make_engine(seed, Stream::noise, index);
  return standard_normal_vector(m, engine);
}

/// y = A x0 + eta z.
inline VectorXd measure(const ProblemInstance& instance, const VectorXd& z) {
  if (z.size() != instance.m())
    throw std::invalid_argument("measure: noise length " + std::to_string(z.size()) +
                                " != m = " + std::to_string(instance.m()));
  if (instance.x0.size() != instance.N())
    throw std::invalid_argument("measure: signal length does not match matrix columns");
  VectorXd y = instance.A.entries() * instance.x0.values;
  y.noalias() += instance.eta * z;
  return y;
}

/// k noise realizations shared by every grid point of a sweep.
struct NoiseBatch {
  std::vector<VectorXd> realizations;
  std::vector<std::uint64_t> seeds;  // per-realization derived seeds

  std::size_t k() const { return realizations.size(); }
};

inline NoiseBatch make_noise_batch(Index m, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("make_noise_batch: k must be positive");
  NoiseBatch batch;
  batch.realizations.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    batch.realizations.push_back(make_noise(m, seed, j));
    batch.seeds.push_back(derive_seed(seed, Stream::noise, j));
  }
  return batch;
}

}  // namespace lassolab

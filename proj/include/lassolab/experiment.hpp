#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "lassolab/equivalence.hpp"
#include "lassolab/geometry.hpp"
#include "lassolab/model.hpp"
#include "lassolab/rbf.hpp"
#include "lassolab/sensitivity.hpp"
#include "lassolab/solvers.hpp"
#include "lassolab/wavelets.hpp"

#ifndef LASSOLAB_PRESET_DIR
#define LASSOLAB_PRESET_DIR "presets"
#endif

namespace lassolab {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Number formatting and CSV
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

struct PointRow {
  std::string program;
  double rho = 0.0;
  double param_value = 0.0;
  int realization = 0;
  double loss = 0.0;
};

struct CurveRow {
  std::string program;
  double rho = 0.0;
  double avg_loss = 0.0;
  double std_err = 0.0;
};

inline void sort_rows(std::vector<PointRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const PointRow& a, const PointRow& b) {
    return std::tie(a.program, a.rho, a.realization) < std::tie(b.program, b.rho, b.realization);
  });
}

inline void sort_rows(std::vector<CurveRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const CurveRow& a, const CurveRow& b) {
    return std::tie(a.program, a.rho) < std::tie(b.program, b.rho);
  });
}

namespace detail {

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path, const std::string& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw std::runtime_error(path + ": expected header '" + header + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace detail

inline constexpr const char* kPointsHeader = "program,rho,param_value,realization,loss";
inline constexpr const char* kCurveHeader = "program,rho,avg_loss,std_err";

inline void write_points_csv(const std::string& path, std::vector<PointRow> rows) {
  sort_rows(rows);
  auto out = detail::open_for_write(path);
  out << kPointsHeader << '\n';
  for (const auto& r : rows)
    out << r.program << ',' << format_number(r.rho) << ',' << format_number(r.param_value) << ','
        << r.realization << ',' << format_number(r.loss) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_curve_csv(const std::string& path, std::vector<CurveRow> rows,
                            const char* header = kCurveHeader) {
  sort_rows(rows);
  auto out = detail::open_for_write(path);
  out << header << '\n';
  for (const auto& r : rows)
    out << r.program << ',' << format_number(r.rho) << ',' << format_number(r.avg_loss) << ','
        << format_number(r.std_err) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::vector<PointRow> read_points_csv(const std::string& path) {
  std::vector<PointRow> rows;
  for (const auto& f : detail::read_csv(path, kPointsHeader)) {
    if (f.size() != 5) throw std::runtime_error(path + ": malformed row");
    rows.push_back({f[0], parse_number(f[1]), parse_number(f[2]), std::stoi(f[3]), parse_number(f[4])});
  }
  return rows;
}

inline std::vector<CurveRow> read_curve_csv(const std::string& path, const char* header = kCurveHeader) {
  std::vector<CurveRow> rows;
  for (const auto& f : detail::read_csv(path, header)) {
    if (f.size() != 4) throw std::runtime_error(path + ": malformed row");
    rows.push_back({f[0], parse_number(f[1]), parse_number(f[2]), parse_number(f[3])});
  }
  return rows;
}

inline std::vector<PointRow> point_rows(const LossCurve& curve) {
  std::vector<PointRow> rows;
  const std::string name(to_string(curve.program));
  for (Index i = 0; i < curve.n(); ++i)
    for (Index j = 0; j < curve.k(); ++j)
      if (curve.valid(i, j))
        rows.push_back({name, curve.rho[i], curve.param_values(i, j), static_cast<int>(j), curve.losses(i, j)});
  return rows;
}

inline std::vector<CurveRow> curve_rows(const LossCurve& curve) {
  std::vector<CurveRow> rows;
  const std::string name(to_string(curve.program));
  for (Index i = 0; i < curve.average.size(); ++i)
    rows.push_back({name, curve.rho[i], curve.average[i], curve.std_error[i]});
  return rows;
}

/// Writes the per-realization points and the per-grid averages of a curve.
inline void emit_csv(const LossCurve& curve, const std::string& points_path, const std::string& curve_path) {
  write_points_csv(points_path, point_rows(curve));
  write_curve_csv(curve_path, curve_rows(curve));
}

/// Inverse of emit_csv for a single program.
inline LossCurve parse_csv(const std::string& points_path, const std::string& curve_path) {
  const auto points = read_points_csv(points_path);
  const auto curves = read_curve_csv(curve_path);
  LossCurve c;
  if (!curves.empty()) c.program = parse_program(curves.front().program);
  else if (!points.empty()) c.program = parse_program(points.front().program);
  const Index n = static_cast<Index>(curves.size());
  int k = 0;
  for (const auto& p : points) k = std::max(k, p.realization + 1);
  c.rho.resize(n);
  c.average.resize(n);
  c.std_error.resize(n);
  c.counts = Eigen::VectorXi::Zero(n);
  for (Index i = 0; i < n; ++i) {
    c.rho[i] = curves[static_cast<std::size_t>(i)].rho;
    c.average[i] = curves[static_cast<std::size_t>(i)].avg_loss;
    c.std_error[i] = curves[static_cast<std::size_t>(i)].std_err;
  }
  c.param_values = MatrixXd::Constant(n, k, std::numeric_limits<double>::quiet_NaN());
  c.losses = c.param_values;
  c.valid.setConstant(n, k, false);
  for (const auto& p : points) {
    const auto it = std::find(c.rho.data(), c.rho.data() + n, p.rho);
    if (it == c.rho.data() + n) throw std::runtime_error(points_path + ": point rho not on curve grid");
    const Index i = it - c.rho.data();
    c.param_values(i, p.realization) = p.param_value;
    c.losses(i, p.realization) = p.loss;
    c.valid(i, p.realization) = true;
    ++c.counts[i];
  }
  return c;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"ls_low_noise", "qp_aspect_sweep", "bp_suboptimality",
                                                 "synthetic_grid", "wavelet_1d", "wavelet_2d",
                                                 "geometry_suite"};
  return kinds;
}

struct RbfSettings {
  double epsilon = 0.05;  // relative to the sweep's central parameter value
  double mu = 1.0;
};

/// One (s, m, N, eta) problem of a multi-case experiment.
struct CaseSpec {
  Index s = 1, m = 0, N = 0;
  double eta = 1.0;
};

struct ExperimentConfig {
  std::string experiment;
  std::string name;  // output file stem; defaults to experiment
  Index s = 1;
  Index m = 0;        // 0: derive from delta
  double delta = 0.25;
  Index N = 1000;
  double eta = 1.0;
  double magnitude = 0.0;  // 0: entries equal N
  int k = 10;
  int n = 61;
  double rho_lo = 0.2, rho_hi = 5.0;
  std::map<Program, RbfSettings> rbf = {{Program::LS, {}}, {Program::QP, {}}, {Program::BP, {}}};
  int n_rbf = 301;
  RidgeSign ridge = RidgeSign::minus;
  std::uint64_t matrix_seed = 1;
  std::uint64_t noise_seed = 2;
  Ensemble ensemble = Ensemble::gaussian;
  std::vector<Program> programs = {Program::LS, Program::QP, Program::BP};
  std::vector<double> deltas;
  std::vector<Index> Ns;
  std::vector<double> etas;
  std::vector<CaseSpec> cases;
  bool direct_ls = false;
  int image_size = 80;
  int levels = -1;  // -1: as many as the size allows (2D: capped at 4)
  // geometry_suite
  std::vector<Index> gw_s = {1, 2, 5, 10};
  std::vector<Index> gw_N = {100, 500, 2000};
  int gw_samples = 100000;
  Index dev_N = 500, dev_s = 3;
  int dev_seeds = 100, dev_samples = 2000;
  Index hull_m = 50, hull_N = 200;
  std::vector<double> hull_alphas = {0.5, 1.0, 2.0};
  int hull_samples = 200;
  // solver
  SolverConfig solver;
  double failure_budget = 0.01;
  // run-time
  std::string output_dir = "out";
  double scale = 1.0;
  unsigned workers = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline Index parse_index(const std::string& key, const std::string& v) {
  const double d = parse_number(v);
  if (d != std::floor(d) || d < 0 || d > 1e12) throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return static_cast<Index>(d);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::string strip_quotes(const std::string& v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
    return v.substr(1, v.size() - 2);
  return v;
}

}  // namespace detail

/// Applies one `key = value` assignment. Unknown keys are rejected.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v = strip_quotes(raw);
  auto num = [&] {
    try {
      return parse_number(v);
    } catch (const ConfigError&) {
      throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
  };
  auto idx = [&] { return parse_index(key, v); };
  auto nums = [&] {
    std::vector<double> out;
    for (const auto& item : split(v, ',')) out.push_back(parse_number(item));
    return out;
  };
  auto idxs = [&] {
    std::vector<Index> out;
    for (const auto& item : split(v, ',')) out.push_back(parse_index(key, item));
    return out;
  };
  static const std::map<std::string, Program> rbf_prefix = {
      {"rbf_ls_", Program::LS}, {"rbf_qp_", Program::QP}, {"rbf_bp_", Program::BP}};
  for (const auto& [prefix, program] : rbf_prefix) {
    if (key.rfind(prefix, 0) == 0) {
      const std::string field = key.substr(prefix.size());
      if (field == "epsilon") cfg.rbf[program].epsilon = num();
      else if (field == "mu") cfg.rbf[program].mu = num();
      else throw ConfigError("unknown key: " + key);
      return;
    }
  }
  if (key == "experiment") {
    if (std::find(experiment_kinds().begin(), experiment_kinds().end(), v) == experiment_kinds().end())
      throw ConfigError("unknown experiment: " + v);
    cfg.experiment = v;
  } else if (key == "name") cfg.name = v;
  else if (key == "s") cfg.s = idx();
  else if (key == "m") cfg.m = idx();
  else if (key == "delta") cfg.delta = num();
  else if (key == "N") cfg.N = idx();
  else if (key == "eta") cfg.eta = num();
  else if (key == "magnitude") cfg.magnitude = num();
  else if (key == "k") cfg.k = static_cast<int>(idx());
  else if (key == "n") cfg.n = static_cast<int>(idx());
  else if (key == "rho_lo") cfg.rho_lo = num();
  else if (key == "rho_hi") cfg.rho_hi = num();
  else if (key == "rbf_epsilon") for (auto& [p, r] : cfg.rbf) r.epsilon = num();
  else if (key == "rbf_mu") for (auto& [p, r] : cfg.rbf) r.mu = num();
  else if (key == "n_rbf") cfg.n_rbf = static_cast<int>(idx());
  else if (key == "ridge_sign") {
    try {
      cfg.ridge = parse_ridge_sign(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "seed") cfg.matrix_seed = cfg.noise_seed = static_cast<std::uint64_t>(idx());
  else if (key == "matrix_seed") cfg.matrix_seed = static_cast<std::uint64_t>(idx());
  else if (key == "noise_seed") cfg.noise_seed = static_cast<std::uint64_t>(idx());
  else if (key == "ensemble") {
    try {
      cfg.ensemble = parse_ensemble(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "programs") {
    cfg.programs.clear();
    for (const auto& item : split(v, ',')) {
      try {
        cfg.programs.push_back(parse_program(item));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  } else if (key == "deltas") cfg.deltas = nums();
  else if (key == "Ns") cfg.Ns = idxs();
  else if (key == "etas") cfg.etas = nums();
  else if (key == "cases") {
    cfg.cases.clear();
    for (const auto& tuple : split(v, ';')) {
      const auto f = split(tuple, ',');
      if (f.size() != 4) throw ConfigError("cases: each case needs s,m,N,eta; got '" + tuple + "'");
      cfg.cases.push_back({parse_index(key, f[0]), parse_index(key, f[1]), parse_index(key, f[2]), parse_number(f[3])});
    }
  } else if (key == "direct_ls") cfg.direct_ls = parse_bool(key, v);
  else if (key == "image_size") cfg.image_size = static_cast<int>(idx());
  else if (key == "levels") cfg.levels = static_cast<int>(idx());
  else if (key == "gw_s") cfg.gw_s = idxs();
  else if (key == "gw_N") cfg.gw_N = idxs();
  else if (key == "gw_samples") cfg.gw_samples = static_cast<int>(idx());
  else if (key == "dev_N") cfg.dev_N = idx();
  else if (key == "dev_s") cfg.dev_s = idx();
  else if (key == "dev_seeds") cfg.dev_seeds = static_cast<int>(idx());
  else if (key == "dev_samples") cfg.dev_samples = static_cast<int>(idx());
  else if (key == "hull_m") cfg.hull_m = idx();
  else if (key == "hull_N") cfg.hull_N = idx();
  else if (key == "hull_alphas") cfg.hull_alphas = nums();
  else if (key == "hull_samples") cfg.hull_samples = static_cast<int>(idx());
  else if (key == "max_iters") cfg.solver.max_iters = static_cast<int>(idx());
  else if (key == "tol_rel_obj") cfg.solver.tol_rel_obj = num();
  else if (key == "tol_cert") cfg.solver.tol_cert = num();
  else if (key == "step_rule") {
    if (v == "fixed_inv_L") cfg.solver.step_rule = StepRule::fixed_inv_L;
    else if (v == "backtracking") cfg.solver.step_rule = StepRule::backtracking;
    else throw ConfigError("step_rule: expected fixed_inv_L or backtracking, got '" + v + "'");
  } else if (key == "polish") cfg.solver.polish = parse_bool(key, v);
  else if (key == "failure_budget") cfg.failure_budget = num();
  else if (key == "output_dir") cfg.output_dir = v;
  else throw ConfigError("unknown key: " + key);
}

inline void validate(const ExperimentConfig& cfg) {
  if (cfg.experiment.empty()) throw ConfigError("missing key: experiment");
  if (!(cfg.rho_lo > 0.0 && cfg.rho_lo < 1.0 && cfg.rho_hi > 1.0))
    throw ConfigError("rho domain must satisfy 0 < rho_lo < 1 < rho_hi");
  if (cfg.k < 1 || cfg.n < 1 || cfg.n_rbf < 2) throw ConfigError("k, n must be >= 1 and n_rbf >= 2");
  if (!(cfg.eta > 0.0)) throw ConfigError("eta must be positive");
  for (double e : cfg.etas)
    if (!(e > 0.0)) throw ConfigError("etas must be positive");
  for (double d : cfg.deltas)
    if (!(d > 0.0)) throw ConfigError("deltas must be positive");
  for (const auto& [p, r] : cfg.rbf)
    if (!(r.epsilon > 0.0) || !(r.mu >= 0.0)) throw ConfigError("rbf epsilon must be > 0 and mu >= 0");
  if (!(cfg.scale > 0.0)) throw ConfigError("scale must be positive");
  if (cfg.s > cfg.N && cfg.experiment != "wavelet_2d" && cfg.experiment != "geometry_suite")
    throw ConfigError("s must not exceed N");
  if (!(cfg.failure_budget >= 0.0 && cfg.failure_budget <= 1.0)) throw ConfigError("failure_budget must lie in [0, 1]");
  try {
    cfg.solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// Flat `key = value` text; '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg = {}) {
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (cfg.name.empty()) cfg.name = cfg.experiment;
  return cfg;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  return parse_config(in);
}

/// A preset name resolves to <preset dir>/<name>.cfg; anything else is a path.
inline std::string resolve_config_path(const std::string& name_or_path,
                                       const std::string& preset_dir = LASSOLAB_PRESET_DIR) {
  namespace fs = std::filesystem;
  if (fs::exists(name_or_path) && fs::is_regular_file(name_or_path)) return name_or_path;
  const fs::path preset = fs::path(preset_dir) / (name_or_path + ".cfg");
  if (fs::exists(preset)) return preset.string();
  throw ConfigError("no such preset or config file: " + name_or_path);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["name"] = c.name;
  j["s"] = c.s;
  j["m"] = c.m;
  j["delta"] = c.delta;
  j["N"] = c.N;
  j["eta"] = c.eta;
  j["magnitude"] = c.magnitude;
  j["k"] = c.k;
  j["n"] = c.n;
  j["rho_domain"] = {c.rho_lo, c.rho_hi};
  for (const auto& [p, r] : c.rbf) j["rbf"][std::string(to_string(p))] = {{"epsilon", r.epsilon}, {"mu", r.mu}};
  j["n_rbf"] = c.n_rbf;
  j["ridge_sign"] = std::string(to_string(c.ridge));
  j["seeds"] = {{"matrix", c.matrix_seed}, {"noise", c.noise_seed}};
  j["ensemble"] = std::string(to_string(c.ensemble));
  std::vector<std::string> programs;
  for (Program p : c.programs) programs.emplace_back(to_string(p));
  j["programs"] = programs;
  j["deltas"] = c.deltas;
  j["Ns"] = c.Ns;
  j["etas"] = c.etas;
  for (const auto& cs : c.cases) j["cases"].push_back({cs.s, cs.m, cs.N, cs.eta});
  j["direct_ls"] = c.direct_ls;
  j["image_size"] = c.image_size;
  j["levels"] = c.levels;
  j["solver"] = {{"max_iters", c.solver.max_iters},
                 {"tol_rel_obj", c.solver.tol_rel_obj},
                 {"tol_cert", c.solver.tol_cert},
                 {"step_rule", c.solver.step_rule == StepRule::fixed_inv_L ? "fixed_inv_L" : "backtracking"},
                 {"polish", c.solver.polish}};
  j["failure_budget"] = c.failure_budget;
  j["scale"] = c.scale;
  return j;
}

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

/// Proportional (N, m) reduction with a floor of N = 500.
inline std::pair<Index, Index> scaled_dims(Index N, Index m, double scale) {
  if (scale == 1.0) return {N, m};
  const Index N2 = std::max<Index>(std::min<Index>(N, 500), static_cast<Index>(std::llround(static_cast<double>(N) * scale)));
  const Index m2 = std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(m) * static_cast<double>(N2) / static_cast<double>(N))));
  return {N2, m2};
}

/// QP certificates are in gradient units; tie their tolerance to the noise level.
inline SolverConfig solver_for_noise(SolverConfig cfg, double eta) {
  cfg.tol_cert = std::min(cfg.tol_cert, 1e-4 * eta);
  return cfg;
}

/// Output of the sweep-and-interpolate pipeline for one problem.
struct ProgramResult {
  Program program = Program::QP;
  LossCurve curve;
  std::optional<RbfModel> model;
  double centre = 0.0;          // sweep's central parameter value
  double upsilon_dagger = 0.0;  // minimizer of the fitted curve
  bool boundary = false;
  NormalizedCurve normalized;   // restricted to the node hull
  ResampledCurve resampled;     // per-realization average at rho * upsilon_dagger
  ResampledCurve psnr;
};

struct CaseResult {
  std::string label;
  CaseSpec spec;
  LambdaStarResult lambda_star;
  SweepGrid grid;
  std::vector<ProgramResult> programs;
  std::optional<CurveRow> tuned_ls;     // direct (LS) at the tuned radius
  std::vector<CurveRow> direct_ls;      // direct (LS) solves at rho * tau_dagger
  double tau_direct = 0.0;
  Index effective_sparsity = 0;
};

struct PipelineOptions {
  std::vector<Program> programs = {Program::LS, Program::QP, Program::BP};
  std::map<Program, RbfSettings> rbf = {{Program::LS, {}}, {Program::QP, {}}, {Program::BP, {}}};
  int n_rbf = 301;
  RidgeSign ridge = RidgeSign::minus;
  double rho_lo = 0.2, rho_hi = 5.0;
  int n = 61;
  bool direct_ls = false;
  double failure_budget = 0.01;
  unsigned workers = 1;
  std::function<VectorXd(const VectorXd&)> to_signal;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Row of the grid closest to rho = 1 in log distance.
inline Index centre_row(const VectorXd& rho) {
  Index best = 0;
  for (Index i = 1; i < rho.size(); ++i)
    if (std::abs(std::log(rho[i])) < std::abs(std::log(rho[best]))) best = i;
  return best;
}

inline LossCurve psnr_curve(const SweepGrid& grid, const LossCurve& like) {
  LossCurve c = like;
  c.losses = grid.psnr;
  for (Index i = 0; i < c.n(); ++i)
    for (Index j = 0; j < c.k(); ++j)
      if (!std::isfinite(c.losses(i, j))) c.valid(i, j) = false;
  return c;
}

}  // namespace detail

/// Reads one program's curve off a sweep: RBF fit over the pooled
/// (parameter, loss) cloud, its minimizer and the normalized curve.
inline ProgramResult analyse_program(const SweepGrid& grid, Program program, const PipelineOptions& opt) {
  ProgramResult pr;
  pr.program = program;
  pr.curve = average_loss(grid, program);
  std::vector<double> nodes, values;
  for (Index i = 0; i < pr.curve.n(); ++i)
    for (Index j = 0; j < pr.curve.k(); ++j)
      if (pr.curve.valid(i, j) && pr.curve.param_values(i, j) > 0.0) {
        nodes.push_back(pr.curve.param_values(i, j));
        values.push_back(pr.curve.losses(i, j));
      }
  const Index c_row = detail::centre_row(grid.rho);
  std::vector<double> centre_vals;
  for (Index j = 0; j < pr.curve.k(); ++j)
    if (pr.curve.valid(c_row, j)) centre_vals.push_back(pr.curve.param_values(c_row, j));
  pr.centre = detail::median(centre_vals);
  if (!(pr.centre > 0.0) && !nodes.empty()) pr.centre = detail::median(nodes);

  const double lo = nodes.empty() ? 0.0 : *std::min_element(nodes.begin(), nodes.end());
  const double hi = nodes.empty() ? 0.0 : *std::max_element(nodes.begin(), nodes.end());
  const VectorXd rho_rbf = log_grid(opt.rho_lo, opt.rho_hi, opt.n_rbf);
  const RbfSettings rs = opt.rbf.count(program) ? opt.rbf.at(program) : RbfSettings{};
  if (nodes.size() >= 2 && hi > lo) {
    const VectorXd nv = Eigen::Map<const VectorXd>(nodes.data(), static_cast<Index>(nodes.size()));
    const VectorXd yv = Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
    pr.model = fit(nv, yv, rs.epsilon * pr.centre, rs.mu, opt.ridge);
    const RbfOptimum o = find_optimum(*pr.model, lo, hi);
    pr.upsilon_dagger = o.upsilon;
    pr.boundary = o.boundary;
    std::vector<double> keep;
    for (Index i = 0; i < rho_rbf.size(); ++i) {
      const double p = rho_rbf[i] * pr.upsilon_dagger;
      if (p >= lo && p <= hi) keep.push_back(rho_rbf[i]);
    }
    pr.normalized = normalized_curve(*pr.model, pr.upsilon_dagger,
                                     Eigen::Map<const VectorXd>(keep.data(), static_cast<Index>(keep.size())));
  } else {
    // Too few distinct nodes to fit: the centre stands in for the optimum.
    pr.upsilon_dagger = pr.centre > 0.0 ? pr.centre : 1.0;
    pr.boundary = true;
    pr.normalized.upsilon_dagger = pr.upsilon_dagger;
    pr.normalized.rho_grid = grid.rho;
    pr.normalized.values = pr.curve.average;
  }
  const VectorXd params = pr.normalized.rho_grid * pr.upsilon_dagger;
  pr.resampled = resample(pr.curve, params);
  pr.psnr = resample(detail::psnr_curve(grid, pr.curve), params);
  return pr;
}

/// Golden-section minimizer of the common-random-numbers average of direct
/// (LS) losses over tau in [lo, hi] (log coordinates).
inline std::pair<double, double> tune_ls_radius(const ProblemInstance& inst, const NoiseBatch& noise,
                                                double lo, double hi, const SolverConfig& cfg,
                                                unsigned workers, double rel_tol = 1e-9) {
  const std::size_t k = noise.k();
  std::vector<VectorXd> ys(k);
  for (std::size_t j = 0; j < k; ++j) ys[j] = measure(inst, noise.realizations[j]);
  auto avg = [&](double tau) {
    std::vector<double> l(k);
    parallel_for(k, workers, [&](std::size_t j) {
      const SolveReport r = solve_ls(inst.A, ys[j], tau, cfg);
      l[j] = loss_nnse(r.estimate, inst.x0.values, inst.eta);
    });
    double t = 0;
    for (double v : l) t += v;
    return t / static_cast<double>(k);
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(lo), c = std::log(hi);
  double x1 = c - inv_phi * (c - a), x2 = a + inv_phi * (c - a);
  double f1 = avg(std::exp(x1)), f2 = avg(std::exp(x2));
  while (c - a > rel_tol) {
    if (f1 < f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - inv_phi * (c - a);
      f1 = avg(std::exp(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (c - a);
      f2 = avg(std::exp(x2));
    }
  }
  return f1 < f2 ? std::pair{std::exp(x1), f1} : std::pair{std::exp(x2), f2};
}

/// Direct (LS) average loss at each tau in `taus` over the shared noise batch.
inline std::vector<std::pair<double, double>> direct_ls_curve(const ProblemInstance& inst, const NoiseBatch& noise,
                                                              const std::vector<double>& taus,
                                                              const SolverConfig& cfg, unsigned workers) {
  const std::size_t k = noise.k();
  std::vector<std::vector<double>> losses(taus.size(), std::vector<double>(k));
  parallel_for(k, workers, [&](std::size_t j) {
    const VectorXd y = measure(inst, noise.realizations[j]);
    VectorXd warm;
    for (std::size_t t = 0; t < taus.size(); ++t) {
      const SolveReport r = solve_ls(inst.A, y, taus[t], cfg, warm.size() ? &warm : nullptr);
      losses[t][j] = loss_nnse(r.estimate, inst.x0.values, inst.eta);
      warm = r.estimate;
    }
  });
  std::vector<std::pair<double, double>> out;
  for (const auto& l : losses) out.push_back(detail::mean_and_stderr(l));
  return out;
}

/// Locates lambda*, sweeps, and analyses each requested program.
inline CaseResult run_pipeline(const ProblemInstance& inst, const NoiseBatch& noise, const SolverConfig& base,
                               const PipelineOptions& opt) {
  CaseResult res;
  const SolverConfig cfg = solver_for_noise(base, inst.eta);
  res.lambda_star = locate_lambda_star(inst, noise, cfg, opt.workers);
  const VectorXd rho = log_grid(opt.rho_lo, opt.rho_hi, opt.n);
  SweepOptions so;
  so.workers = opt.workers;
  so.to_signal = opt.to_signal;
  res.grid = lambda_sweep(inst, noise, rho, res.lambda_star.lambda_star, cfg, so);
  enforce_failure_budget(res.grid.failures(), res.grid.n() * res.grid.k(), opt.failure_budget);
  for (Program p : opt.programs) res.programs.push_back(analyse_program(res.grid, p, opt));

  if (opt.direct_ls) {
    // The equivalence sweep leaves the (LS) curve unresolved where tau moves
    // little with lambda; evaluate it directly around the tuned radius.
    const ProgramResult* ls = nullptr;
    for (const auto& pr : res.programs)
      if (pr.program == Program::LS) ls = &pr;
    const double guess = ls ? ls->upsilon_dagger : inst.x0.l1_norm();
    SolverConfig lcfg = cfg;
    double ynorm = 0.0;
    for (const auto& z : noise.realizations) ynorm = std::max(ynorm, measure(inst, z).squaredNorm());
    lcfg.tol_cert = std::min(cfg.tol_cert, std::max(1e-6 * inst.eta * inst.eta, 1e-10 * ynorm));
    const auto [tau, val] = tune_ls_radius(inst, noise, guess * 0.98, guess * 1.02, lcfg, opt.workers);
    res.tau_direct = tau;
    std::vector<double> taus;
    const VectorXd rr = log_grid(opt.rho_lo, opt.rho_hi, opt.n);
    for (Index i = rr.size() - 1; i >= 0; --i) taus.push_back(rr[i] * tau);
    const auto curve = direct_ls_curve(inst, noise, taus, lcfg, opt.workers);
    for (std::size_t t = 0; t < taus.size(); ++t)
      res.direct_ls.push_back({"LS_direct", taus[t] / tau, curve[t].first, curve[t].second});
    res.tuned_ls = CurveRow{"LS_direct", 1.0, val, 0.0};
  }
  return res;
}

namespace detail {

inline std::string label_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::vector<std::pair<std::string, CaseSpec>> expand_cases(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, CaseSpec>> out;
  auto dims = [&](Index N, Index m, double delta) {
    const Index m0 = m > 0 ? m : static_cast<Index>(std::llround(delta * static_cast<double>(N)));
    return scaled_dims(N, m0, c.scale);
  };
  const std::vector<double> etas = c.etas.empty() ? std::vector<double>{c.eta} : c.etas;
  if (c.experiment == "synthetic_grid" && !c.cases.empty()) {
    for (const auto& cs : c.cases) {
      auto [N, m] = dims(cs.N, cs.m, 0.0);
      // Dense cases keep their sparsity fraction once scaling leaves s >= m.
      const Index s = cs.s < m ? cs.s
                               : std::max<Index>(1, static_cast<Index>(std::llround(
                                                        static_cast<double>(cs.s) * static_cast<double>(N) /
                                                        static_cast<double>(cs.N))));
      out.push_back({"s" + std::to_string(s) + "_m" + std::to_string(m) + "_N" + std::to_string(N) +
                         "_eta" + label_number(cs.eta),
                     {s, m, N, cs.eta}});
    }
    return out;
  }
  const std::vector<Index> Ns = c.Ns.empty() ? std::vector<Index>{c.N} : c.Ns;
  const bool by_delta = !c.deltas.empty();
  const std::vector<double> deltas = by_delta ? c.deltas : std::vector<double>{c.delta};
  for (Index N0 : Ns)
    for (double d : deltas)
      for (double eta : etas) {
        auto [N, m] = dims(N0, by_delta ? 0 : c.m, d);
        std::string label = "N" + std::to_string(N) + "_m" + std::to_string(m) + "_eta" + label_number(eta);
        out.push_back({label, {c.s, m, N, eta}});
      }
  return out;
}

}  // namespace detail

struct ExperimentArtifacts {
  std::vector<std::string> files;
  nlohmann::json manifest;
};

namespace detail {

inline void write_json(const std::string& path, const nlohmann::json& j) {
  auto out = open_for_write(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Builds the ground truth and optional synthesis map for a case.
struct CaseProblem {
  ProblemInstance instance;
  std::function<VectorXd(const VectorXd&)> to_signal;
  Index effective_sparsity = 0;
};

inline CaseProblem build_problem(const ExperimentConfig& c, const CaseSpec& spec) {
  CaseProblem cp;
  if (c.experiment == "wavelet_2d") {
    int size = c.image_size;
    if (c.scale != 1.0) {
      size = static_cast<int>(std::llround(c.image_size * std::sqrt(c.scale) / 16.0)) * 16;
      size = std::max(size, 32);  // N >= 500 floor
    }
    const int levels = c.levels >= 0 ? c.levels : std::min(4, max_haar_levels(size));
    const Eigen::MatrixXd coeffs = haar2d_forward(sslp_phantom(size), levels);
    VectorXd x = Eigen::Map<const VectorXd>(coeffs.data(), coeffs.size());
    const double cutoff = 1e-12 * x.cwiseAbs().maxCoeff();
    for (Index i = 0; i < x.size(); ++i)
      if (std::abs(x[i]) <= cutoff) x[i] = 0.0;
    const Index N = x.size();
    const Index m = c.m > 0 ? static_cast<Index>(std::llround(static_cast<double>(c.m) * N / (80.0 * 80.0)))
                            : static_cast<Index>(std::llround(c.delta * static_cast<double>(N)));
    cp.instance = {SparseSignal::from_values(x), make_matrix(m, N, c.ensemble, c.matrix_seed), spec.eta, c.noise_seed};
    cp.effective_sparsity = cp.instance.x0.sparsity;
    cp.to_signal = [size, levels](const VectorXd& v) {
      const Eigen::MatrixXd img = haar2d_inverse(Eigen::Map<const Eigen::MatrixXd>(v.data(), size, size), levels);
      return VectorXd(Eigen::Map<const VectorXd>(img.data(), img.size()));
    };
    return cp;
  }
  const double magnitude = c.magnitude > 0.0 ? c.magnitude : static_cast<double>(spec.N);
  cp.instance = {make_sparse_signal(spec.N, spec.s, magnitude), make_matrix(spec.m, spec.N, c.ensemble, c.matrix_seed),
                 spec.eta, c.noise_seed};
  cp.effective_sparsity = spec.s;
  if (c.experiment == "wavelet_1d") {
    const int levels = c.levels >= 0 ? c.levels : max_haar_levels(spec.N);
    cp.to_signal = [levels](const VectorXd& v) { return haar1d_inverse(v, levels); };
  }
  return cp;
}

inline CaseSpec effective_spec(const CaseProblem& cp, const CaseSpec& spec) {
  CaseSpec out = spec;
  out.N = cp.instance.N();
  out.m = cp.instance.m();
  out.s = cp.effective_sparsity;
  return out;
}

inline nlohmann::json case_json(const CaseResult& r) {
  nlohmann::json j;
  j["label"] = r.label;
  j["s"] = r.spec.s;
  j["m"] = r.spec.m;
  j["N"] = r.spec.N;
  j["eta"] = r.spec.eta;
  j["lambda_star"] = r.lambda_star.lambda_star;
  j["lambda_star_evaluations"] = r.lambda_star.evaluations;
  j["cells"] = r.grid.n() * r.grid.k();
  j["failures"] = r.grid.failures();
  for (const auto& pr : r.programs) {
    nlohmann::json p;
    p["centre"] = pr.centre;
    p["upsilon_dagger"] = pr.upsilon_dagger;
    p["boundary_optimum"] = pr.boundary;
    p["rbf_fitted"] = pr.model.has_value();
    if (pr.model) p["rbf_rcond"] = pr.model->rcond;
    j["programs"][std::string(to_string(pr.program))] = p;
  }
  if (r.tuned_ls) {
    j["tau_direct"] = r.tau_direct;
    j["tuned_ls_loss"] = r.tuned_ls->avg_loss;
  }
  return j;
}

}  // namespace detail

/// Writes the CSV/JSON bundle for one analysed case. Returns the file list.
inline std::vector<std::string> write_case(const std::string& dir, const std::string& stem, const CaseResult& r) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  std::vector<PointRow> points;
  std::vector<CurveRow> grid_curves, rbf_curves, psnr_curves;
  for (const auto& pr : r.programs) {
    for (auto& row : point_rows(pr.curve)) points.push_back(row);
    for (auto& row : curve_rows(pr.curve)) grid_curves.push_back(row);
    const std::string name(to_string(pr.program));
    for (Index i = 0; i < pr.normalized.rho_grid.size(); ++i) {
      rbf_curves.push_back({name, pr.normalized.rho_grid[i], pr.normalized.values[i], pr.resampled.std_error[i]});
      psnr_curves.push_back({name, pr.normalized.rho_grid[i], pr.psnr.average[i], pr.psnr.std_error[i]});
    }
  }
  auto path = [&](const std::string& suffix) { return (fs::path(dir) / (stem + suffix)).string(); };
  write_points_csv(path("_points.csv"), points);
  write_curve_csv(path("_curve.csv"), grid_curves);
  write_curve_csv(path("_rbf.csv"), rbf_curves);
  write_curve_csv(path("_psnr.csv"), psnr_curves, "program,rho,avg_psnr,std_err");
  files.insert(files.end(), {path("_points.csv"), path("_curve.csv"), path("_rbf.csv"), path("_psnr.csv")});
  for (const auto& pr : r.programs) {
    if (!pr.model) continue;
    const std::string f = path("_rbf_" + std::string(to_string(pr.program)) + ".json");
    detail::write_json(f, to_json(*pr.model));
    files.push_back(f);
  }
  if (!r.direct_ls.empty()) {
    write_curve_csv(path("_direct_ls.csv"), r.direct_ls);
    files.push_back(path("_direct_ls.csv"));
  }
  return files;
}

/// Geometry suite: width envelopes, deviation frequencies, sandwich ratios
/// and random-hull widths, as rows of `quantity,s,N,m,alpha,value,std_err,samples`.
inline std::vector<std::string> run_geometry_suite(const ExperimentConfig& c, nlohmann::json& manifest) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(c.output_dir) / (c.name + "_geometry.csv")).string();
  auto out = detail::open_for_write(path);
  out << "quantity,s,N,m,alpha,value,std_err,samples\n";
  auto row = [&](const std::string& q, Index s, Index N, Index m, double alpha, double value, double se, int samples) {
    out << q << ',' << s << ',' << N << ',' << m << ',' << format_number(alpha) << ',' << format_number(value) << ','
        << format_number(se) << ',' << samples << '\n';
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (Index s : c.gw_s)
    for (Index N : c.gw_N) {
      if (s > N) continue;
      const WidthEstimate w = gw_sparse_cap(s, N, c.gw_samples, c.matrix_seed, c.workers);
      const WidthEstimate k = gw_ks(s, N, c.gw_samples, c.matrix_seed, c.workers);
      row("gw_sparse_cap", s, N, 0, nan, w.mean, w.std_error, w.samples);
      row("gw_ks", s, N, 0, nan, k.mean, k.std_error, k.samples);
      row("envelope_ratio", s, N, 0, nan, w.mean * w.mean / (static_cast<double>(s) * std::log(2.0 * N / s)), nan, w.samples);
    }
  {
    const Index s = c.dev_s, N = c.dev_N;
    const Index m = static_cast<Index>(std::ceil(20.0 * s * std::log(static_cast<double>(N) / s)));
    int below = 0;
    double worst = 0.0;
    for (int t = 0; t < c.dev_seeds; ++t) {
      const MeasurementMatrix A = make_matrix(m, N, c.ensemble, derive_seed(c.matrix_seed, Stream::deviation, 1000 + t));
      const DeviationResult d = deviation_check(A, s, c.dev_samples, derive_seed(c.matrix_seed, Stream::deviation, t));
      if (d.value < 0.5) ++below;
      worst = std::max(worst, d.value);
    }
    row("deviation_below_half_fraction", s, N, m, nan, static_cast<double>(below) / c.dev_seeds, nan, c.dev_seeds);
    row("deviation_worst", s, N, m, nan, worst, nan, c.dev_seeds);
  }
  {
    const MeasurementMatrix A = make_matrix(c.hull_m, c.hull_N, c.ensemble, c.matrix_seed);
    for (double alpha : c.hull_alphas) {
      const WidthEstimate w = random_hull_width(A, alpha, c.hull_samples, c.matrix_seed, c.workers);
      row("random_hull_width", 0, c.hull_N, c.hull_m, alpha, w.mean, w.std_error, w.samples);
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
  manifest["cases"] = nlohmann::json::array();
  return {path};
}

/// Builds, sweeps and analyses one case of an experiment.
inline CaseResult run_case(const ExperimentConfig& c, const CaseSpec& spec) {
  detail::CaseProblem cp = detail::build_problem(c, spec);
  const NoiseBatch noise = make_noise_batch(cp.instance.m(), static_cast<std::size_t>(c.k), c.noise_seed);
  PipelineOptions opt;
  opt.programs = c.programs;
  opt.rbf = c.rbf;
  opt.n_rbf = c.n_rbf;
  opt.ridge = c.ridge;
  opt.rho_lo = c.rho_lo;
  opt.rho_hi = c.rho_hi;
  opt.n = c.n;
  opt.direct_ls = c.direct_ls;
  opt.failure_budget = c.failure_budget;
  opt.workers = c.workers;
  opt.to_signal = cp.to_signal;
  CaseResult r = run_pipeline(cp.instance, noise, c.solver, opt);
  r.spec = detail::effective_spec(cp, spec);
  r.effective_sparsity = cp.effective_sparsity;
  return r;
}

/// Runs a full experiment, writing CSVs, RBF models and manifest.json into
/// cfg.output_dir. A failure-budget abort still writes the manifest (status
/// "aborted") before rethrowing.
inline ExperimentArtifacts run_experiment(const ExperimentConfig& c) {
  namespace fs = std::filesystem;
  validate(c);
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(c.output_dir);
  ExperimentArtifacts art;
  nlohmann::json& man = art.manifest;
  man["version"] = kVersion;
  man["config"] = to_json(c);
  man["workers"] = c.workers;
  man["status"] = "running";
  const std::string manifest_path = (fs::path(c.output_dir) / (c.name + "_manifest.json")).string();
  auto finish = [&](const std::string& status) {
    man["status"] = status;
    man["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    man["files"] = art.files;
    detail::write_json(manifest_path, man);
  };
  try {
    if (c.experiment == "geometry_suite") {
      art.files = run_geometry_suite(c, man);
    } else {
      man["cases"] = nlohmann::json::array();
      const auto cases = detail::expand_cases(c);
      for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const auto& [label, spec] = cases[ci];
        CaseResult r = run_case(c, spec);
        r.label = cases.size() == 1 ? "" : label;
        const std::string stem = r.label.empty() ? c.name : c.name + "_" + r.label;
        for (auto& f : write_case(c.output_dir, stem, r)) art.files.push_back(f);
        nlohmann::json cj = detail::case_json(r);
        cj["stem"] = stem;
        man["cases"].push_back(cj);
      }
    }
  } catch (const SolverBudgetExceeded&) {
    finish("aborted");
    throw;
  }
  finish("ok");
  art.files.push_back(manifest_path);
  return art;
}

}  // namespace lassolab

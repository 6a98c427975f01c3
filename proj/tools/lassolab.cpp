// Command-line driver for lassolab experiments.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lassolab/experiment.hpp"

namespace fs = std::filesystem;
using namespace lassolab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;

struct Common {
  std::optional<std::uint64_t> seed;
  double scale = 1.0;
  unsigned workers = 1;
  std::string out;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Seed for both matrix and noise streams");
  app->add_option("--scale", c.scale, "Reduce (N, m) proportionally (minimum N = 500)")->check(CLI::PositiveNumber);
  app->add_option("--workers", c.workers, "Worker threads")->check(CLI::Range(1u, 1024u));
  app->add_option("--out", c.out, "Output directory (or file for phantom/solve)");
  app->add_option("--set", c.overrides, "Override a config key: --set key=value (repeatable)");
}

void apply_common(ExperimentConfig& cfg, const Common& c) {
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (c.seed) cfg.matrix_seed = cfg.noise_seed = *c.seed;
  cfg.scale = c.scale;
  cfg.workers = c.workers;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (cfg.name.empty()) cfg.name = cfg.experiment;
}

int run_and_report(const ExperimentConfig& cfg) {
  validate(cfg);
  const ExperimentArtifacts art = run_experiment(cfg);
  for (const auto& f : art.files) std::cout << f << '\n';
  if (art.manifest.contains("cases")) {
    for (const auto& c : art.manifest["cases"]) {
      std::cout << c.value("stem", cfg.name) << ": lambda* = " << format_number(c["lambda_star"].get<double>());
      if (c.contains("programs"))
        for (const auto& [p, v] : c["programs"].items())
          std::cout << ", " << p << " optimum = " << format_number(v["upsilon_dagger"].get<double>())
                    << (v["boundary_optimum"].get<bool>() ? " (boundary)" : "");
      std::cout << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lassolab: parameter sensitivity of LASSO programs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // solve
  Common solve_common;
  std::string program_name = "QP";
  double param = 1.0;
  Index s = 1, m = 100, N = 400;
  double eta = 1.0;
  std::uint64_t realization = 0;
  auto* solve = app.add_subcommand("solve", "Solve one program on one random instance");
  add_common(solve, solve_common);
  solve->add_option("--program", program_name, "LS, QP or BP")->required();
  solve->add_option("--param", param, "tau, lambda or sigma")->required();
  solve->add_option("-s", s, "Sparsity");
  solve->add_option("-m", m, "Measurements");
  solve->add_option("-N", N, "Ambient dimension");
  solve->add_option("--eta", eta, "Noise level");
  solve->add_option("--realization", realization, "Noise realization index");

  // sweep
  Common sweep_common;
  std::string sweep_config;
  auto* sweep = app.add_subcommand("sweep", "Lambda sweep with RBF read-off for one instance");
  add_common(sweep, sweep_common);
  sweep->add_option("config", sweep_config, "Optional config file (defaults: synthetic single case)");

  // experiment
  Common exp_common;
  std::string exp_name;
  auto* experiment = app.add_subcommand("experiment", "Run a preset or config file");
  add_common(experiment, exp_common);
  experiment->add_option("preset", exp_name, "Preset name or path to a config file")->required();

  // geometry
  Common geo_common;
  std::string geo_config;
  auto* geometry = app.add_subcommand("geometry", "Gaussian width, deviation and hull-width suite");
  add_common(geometry, geo_common);
  geometry->add_option("config", geo_config, "Optional config file");

  // phantom
  Common ph_common;
  int size = 80;
  int levels = 4;
  auto* phantom = app.add_subcommand("phantom", "Write the square phantom as PGM");
  add_common(phantom, ph_common);
  phantom->add_option("--size", size, "Side length in pixels")->check(CLI::Range(16, 1 << 14));
  phantom->add_option("--levels", levels, "Haar levels for the sparsity report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*solve) {
      const Program program = parse_program(program_name);
      if (s < 1 || s > N || m < 1) throw ConfigError("need 1 <= s <= N and m >= 1");
      const std::uint64_t seed = solve_common.seed.value_or(1);
      ProblemInstance inst{make_sparse_signal(N, s, static_cast<double>(N)),
                           make_matrix(m, N, Ensemble::gaussian, seed), eta, seed};
      const VectorXd y = measure(inst, make_noise(m, seed, realization));
      nlohmann::json j;
      j["program"] = std::string(to_string(program));
      j["param"] = param;
      j["s"] = s;
      j["m"] = m;
      j["N"] = N;
      j["eta"] = eta;
      j["seed"] = seed;
      j["realization"] = realization;
      try {
        const SolveReport r = solve_program(program, inst.A, y, param, SolverConfig{});
        const EquivalenceTriple t = map_params(r.estimate, y, inst.A, program == Program::QP ? param : r.lambda);
        j["objective"] = r.objective;
        j["iterations"] = r.iterations;
        j["certificate"] = r.certificate;
        j["converged"] = r.converged;
        j["loss"] = loss_nnse(r.estimate, inst.x0.values, eta);
        j["tau"] = t.tau;
        j["sigma"] = t.sigma;
        if (program == Program::BP) j["lambda"] = r.lambda;
        j["support_size"] = (r.estimate.array() != 0.0).count();
      } catch (const InfeasibleSigma& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
      }
      if (solve_common.out.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        std::ofstream f(solve_common.out);
        if (!f) throw std::runtime_error("cannot open " + solve_common.out);
        f << j.dump(2) << '\n';
      }
      return 0;
    }
    if (*sweep) {
      ExperimentConfig cfg;
      if (!sweep_config.empty()) {
        cfg = load_config(resolve_config_path(sweep_config));
      } else {
        cfg.experiment = "synthetic_grid";
        cfg.name = "sweep";
        cfg.m = 250;
      }
      apply_common(cfg, sweep_common);
      return run_and_report(cfg);
    }
    if (*experiment) {
      ExperimentConfig cfg = load_config(resolve_config_path(exp_name));
      apply_common(cfg, exp_common);
      return run_and_report(cfg);
    }
    if (*geometry) {
      ExperimentConfig cfg;
      if (!geo_config.empty()) {
        cfg = load_config(resolve_config_path(geo_config));
        if (cfg.experiment != "geometry_suite") throw ConfigError("geometry expects experiment = geometry_suite");
      } else {
        cfg.experiment = "geometry_suite";
        cfg.name = "geometry";
      }
      apply_common(cfg, geo_common);
      return run_and_report(cfg);
    }
    if (*phantom) {
      const Eigen::MatrixXd img = sslp_phantom(size);
      const std::string path = ph_common.out.empty() ? "sslp_" + std::to_string(size) + ".pgm" : ph_common.out;
      if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
      write_pgm(path, img);
      const int lv = std::min(levels, max_haar_levels(size));
      std::cout << path << ": " << size << "x" << size << ", " << effective_sparsity(haar2d_forward(img, lv))
                << " nonzero Haar coefficients at " << lv << " levels\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SolverBudgetExceeded& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return kExitBudget;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

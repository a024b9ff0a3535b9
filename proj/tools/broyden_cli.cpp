// Command-line front end: solve, compare, certify, gen-problem.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "broyden/harness.hpp"

namespace {

using broyden::ExperimentConfig;

struct Flags {
  std::string config_path;
  std::string problem;
  std::size_t n = 0;
  std::size_t m = 0;
  double gamma = 0.0;
  double c = 0.0;
  std::size_t N = 0;
  std::uint64_t seed = 0;
  std::uint64_t problem_seed = 0;
  std::vector<double> s_grid;
  std::vector<std::string> schemes;
  std::string x0_rule;
  double radius_factor = 0.0;
  std::string b0_rule;
  int max_iters = 0;
  double tol = 0.0;
  double lipschitz_M = 0.0;
  int lipschitz_samples = 0;
  int threads = 0;
  std::string out;
  bool verbose = false;

  std::vector<std::pair<CLI::Option*, void (*)(const Flags&, ExperimentConfig&)>> setters;
};

template <class T>
void add_flag(CLI::App* app, Flags& f, const std::string& name, T& field, const std::string& help,
              void (*apply)(const Flags&, ExperimentConfig&)) {
  f.setters.emplace_back(app->add_option(name, field, help), apply);
}

void add_common(CLI::App* app, Flags& f, bool grid) {
  app->add_option("--config", f.config_path, "JSON config; flags override its fields")->check(CLI::ExistingFile);
  add_flag(app, f, "--problem", f.problem, "linear | logsumexp | chandrasekhar",
           [](const Flags& f, ExperimentConfig& c) { c.problem.kind = f.problem; });
  add_flag(app, f, "--n", f.n, "dimension (linear, logsumexp)",
           [](const Flags& f, ExperimentConfig& c) { c.problem.n = f.n; });
  add_flag(app, f, "--m", f.m, "log-sum-exp terms", [](const Flags& f, ExperimentConfig& c) { c.problem.m = f.m; });
  add_flag(app, f, "--gamma", f.gamma, "log-sum-exp regularization",
           [](const Flags& f, ExperimentConfig& c) { c.problem.gamma = f.gamma; });
  add_flag(app, f, "--c", f.c, "H-equation parameter", [](const Flags& f, ExperimentConfig& c) { c.problem.c = f.c; });
  add_flag(app, f, "--N", f.N, "H-equation grid size", [](const Flags& f, ExperimentConfig& c) { c.problem.N = f.N; });
  add_flag(app, f, "--seed", f.seed, "master seed",
           [](const Flags& f, ExperimentConfig& c) { c.master_seed = f.seed; });
  add_flag(app, f, "--problem-seed", f.problem_seed, "problem generator seed",
           [](const Flags& f, ExperimentConfig& c) { c.problem.seed = f.problem_seed; });
  if (grid) {
    add_flag(app, f, "--s", f.s_grid, "comma-separated B0 scale factors",
             [](const Flags& f, ExperimentConfig& c) { c.s_grid = f.s_grid; });
    f.setters.back().first->delimiter(',');
    add_flag(app, f, "--schemes", f.schemes, "comma-separated schemes (good, bad, newton)",
             [](const Flags& f, ExperimentConfig& c) {
               c.schemes.clear();
               for (const auto& s : f.schemes) c.schemes.push_back(broyden::scheme_from_string(s));
             });
    f.setters.back().first->delimiter(',');
  }
  add_flag(app, f, "--x0-rule", f.x0_rule, "gaussian | sphere",
           [](const Flags& f, ExperimentConfig& c) { c.init.x0_rule = f.x0_rule; });
  add_flag(app, f, "--radius-factor", f.radius_factor, "sphere perturbation radius factor",
           [](const Flags& f, ExperimentConfig& c) { c.init.radius_factor = f.radius_factor; });
  add_flag(app, f, "--b0-rule", f.b0_rule, "s_J_x0 | s_J_star | explicit",
           [](const Flags& f, ExperimentConfig& c) { c.init.b0_rule = f.b0_rule; });
  add_flag(app, f, "--max-iters", f.max_iters, "iteration cap",
           [](const Flags& f, ExperimentConfig& c) { c.solver.max_iters = f.max_iters; });
  add_flag(app, f, "--tol", f.tol, "residual tolerance",
           [](const Flags& f, ExperimentConfig& c) { c.solver.tol_residual = f.tol; });
  add_flag(app, f, "--lipschitz-m", f.lipschitz_M, "supplied Lipschitz constant M",
           [](const Flags& f, ExperimentConfig& c) { c.lipschitz_M = f.lipschitz_M; });
  add_flag(app, f, "--lipschitz-samples", f.lipschitz_samples, "samples for the M estimate",
           [](const Flags& f, ExperimentConfig& c) { c.lipschitz_samples = f.lipschitz_samples; });
  add_flag(app, f, "--threads", f.threads, "concurrent grid points",
           [](const Flags& f, ExperimentConfig& c) { c.threads = f.threads; });
  add_flag(app, f, "--out", f.out, "output directory", [](const Flags& f, ExperimentConfig& c) { c.output_dir = f.out; });
  app->add_flag("--verbose", f.verbose, "include x vectors in trace JSON");
}

ExperimentConfig resolve(const Flags& f, ExperimentConfig defaults) {
  ExperimentConfig cfg = std::move(defaults);
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    cfg = broyden::config_from_json(nlohmann::json::parse(in), cfg);
  }
  for (const auto& [opt, apply] : f.setters) {
    if (opt->count() > 0) apply(f, cfg);
  }
  if (f.verbose) cfg.verbose = true;
  cfg.validate();
  return cfg;
}

void print_run_line(const broyden::RunResult& run) {
  const auto to_tol = broyden::iterations_to(run.trace, 1e-10);
  std::printf("%-12s status=%-10s iterations=%zu final_residual=%.3e to_1e-10=%s%s\n", broyden::run_label(run).c_str(),
              broyden::to_string(run.trace.status), run.trace.iterations(),
              run.trace.records.empty() ? 0.0 : run.trace.final_residual(),
              to_tol ? std::to_string(*to_tol).c_str() : "-",
              run.certificate && run.certificate->certified() ? " certified" : "");
}

int cmd_compare(const Flags& f) {
  ExperimentConfig defaults;
  defaults.s_grid = {0.1, 0.2, 1.0, 2.0};
  defaults.output_dir = "out";
  const ExperimentConfig cfg = resolve(f, defaults);
  const auto res = broyden::run_comparison(cfg);
  broyden::write_outputs(res, cfg.output_dir);
  for (const auto& run : res.runs) print_run_line(run);
  return 0;
}

int cmd_solve(const Flags& f, const std::string& scheme, double s) {
  ExperimentConfig cfg = resolve(f, {});
  cfg.schemes = {broyden::scheme_from_string(scheme)};
  cfg.s_grid = {s};
  const auto res = broyden::run_comparison(cfg);
  if (!cfg.output_dir.empty()) broyden::write_outputs(res, cfg.output_dir);
  std::cout << broyden::trace_to_json(res.runs.front().trace, cfg.verbose).dump(2) << "\n";
  return res.runs.front().trace.status == broyden::SolveStatus::Converged ? 0 : 2;
}

int cmd_certify(const Flags& f, double s) {
  ExperimentConfig defaults;
  defaults.init.x0_rule = "sphere";
  defaults.init.radius_factor = 1e-3;
  defaults.init.b0_rule = "s_J_star";
  ExperimentConfig cfg = resolve(f, defaults);
  cfg.s_grid = {s};
  const auto res = broyden::run_comparison(cfg);
  if (!cfg.output_dir.empty()) broyden::write_outputs(res, cfg.output_dir);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& run : res.runs) {
    nlohmann::json item;
    item["label"] = broyden::run_label(run);
    item["status"] = broyden::to_string(run.trace.status);
    if (run.certificate) item["certificate"] = broyden::certificate_to_json(*run.certificate);
    if (run.inequalities) item["inequalities_satisfied"] = run.inequalities->all_satisfied();
    if (!run.note.empty()) item["note"] = run.note;
    out.push_back(std::move(item));
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_gen_problem(const Flags& f) {
  const ExperimentConfig cfg = resolve(f, {});
  const auto spec = broyden::build_problem(cfg.problem, cfg.master_seed);
  const std::string text = broyden::problem_to_json(spec).dump(2) + "\n";
  if (cfg.output_dir.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(cfg.output_dir, std::ios::binary);
    if (!out) throw broyden::IoError("cannot write " + cfg.output_dir);
    out << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Newton and Broyden solvers with convergence-rate diagnostics"};
  app.require_subcommand(1);

  Flags solve_flags, compare_flags, certify_flags, gen_flags;
  std::string solve_scheme = "good";
  double solve_s = 1.0;
  double certify_s = 1.0;

  auto* solve = app.add_subcommand("solve", "run one scheme and print its trace");
  add_common(solve, solve_flags, false);
  solve->add_option("--scheme", solve_scheme, "good | bad | newton");
  solve->add_option("--s", solve_s, "B0 scale factor");

  auto* compare = app.add_subcommand("compare", "good-vs-bad sweep over the s-grid; writes CSV and JSON");
  add_common(compare, compare_flags, true);

  auto* certify = app.add_subcommand("certify", "rate certificates and step-inequality checks");
  add_common(certify, certify_flags, false);
  certify->add_option("--s", certify_s, "B0 scale factor");

  auto* gen = app.add_subcommand("gen-problem", "print a generated problem as JSON (--out writes a file)");
  add_common(gen, gen_flags, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) return cmd_solve(solve_flags, solve_scheme, solve_s);
    if (*compare) return cmd_compare(compare_flags);
    if (*certify) return cmd_certify(certify_flags, certify_s);
    if (*gen) return cmd_gen_problem(gen_flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#include "broyden/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <string_view>

#include "broyden/rng.hpp"

namespace broyden {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string normalize_kind(const std::string& kind) {
  if (kind == "hequation" || kind == "h-equation") return "chandrasekhar";
  return kind;
}

nlohmann::json matrix_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_rows(const nlohmann::json& rows) {
  const auto data = rows.get<std::vector<std::vector<double>>>();
  if (data.empty()) throw std::invalid_argument("explicit b0 must be a nonempty row array");
  Matrix m(data.size(), data.front().size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].size() != m.cols()) throw std::invalid_argument("explicit b0 rows differ in length");
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = data[i][j];
  }
  if (!m.all_finite()) throw NonFiniteValue("explicit b0 has non-finite entries");
  return m;
}

Vector reference_hint(const ProblemSpec& spec, std::size_t dim) {
  if (std::holds_alternative<ChandrasekharProblem>(spec)) return Vector::constant(dim, 1.0);
  return Vector(dim);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

struct SharedSetup {
  const ProblemInstance& problem;
  const Vector& x0;
  const std::optional<ReferenceSolution>& reference;
  double M;
  const std::string& m_source;
};

RunResult run_one(const ExperimentConfig& cfg, const SharedSetup& setup, Scheme scheme, double s) {
  RunResult run;
  run.scheme = scheme;
  run.s = s;
  run.seed = Rng::derive_seed(cfg.master_seed, std::string("run:") + to_string(scheme) + ":" + format_double(s));

  SolverConfig solver = cfg.solver;
  solver.diagnostics = true;
  const ProblemInstance& p = setup.problem;

  if (scheme == Scheme::Newton) {
    run.trace = newton_solve(p, setup.x0, solver);
  } else {
    Matrix b0;
    if (cfg.init.b0_rule == "s_J_x0") {
      b0 = p.jacobian(setup.x0);
    } else if (cfg.init.b0_rule == "s_J_star") {
      if (!setup.reference) throw std::runtime_error("b0 rule s_J_star needs a reference solution");
      b0 = setup.reference->j_star;
    } else {
      b0 = *cfg.init.b0;
    }
    b0 *= s;
    if (scheme == Scheme::Good) {
      run.trace = broyden_good_solve(p, setup.x0, b0, solver);
    } else {
      Matrix h0;
      try {
        h0 = inverse(b0);
      } catch (const SingularMatrix& e) {
        run.trace.scheme = Scheme::Bad;
        run.trace.status = SolveStatus::Singular;
        run.trace.message = e.what();
        run.trace.final_x = setup.x0;
        run.note = "B0 is singular";
        return run;
      }
      run.trace = broyden_bad_solve(p, setup.x0, h0, solver);
    }
  }

  if (!setup.reference || run.trace.records.empty()) return run;
  try {
    run.potentials = compute_potentials(run.trace, *setup.reference, scheme);
    if (scheme != Scheme::Newton) {
      run.certificate = certify(*run.potentials, *setup.reference, setup.M, setup.m_source);
      run.inequalities =
          check_step_inequalities(run.trace, *run.potentials, *setup.reference, p, setup.M, scheme);
    }
  } catch (const std::exception& e) {
    run.note = std::string("diagnostics failed: ") + e.what();
  }
  return run;
}

}  // namespace

void ExperimentConfig::validate() const {
  solver.validate();
  if (s_grid.empty()) throw std::invalid_argument("s_grid must be nonempty");
  for (double s : s_grid) {
    if (!std::isfinite(s) || s == 0.0) throw std::invalid_argument("s_grid entries must be finite and nonzero");
  }
  if (schemes.empty()) throw std::invalid_argument("scheme list must be nonempty");
  if (!(init.radius_factor >= 0.0)) throw std::invalid_argument("radius_factor must be >= 0");
  if (init.x0_rule != "gaussian" && init.x0_rule != "sphere") {
    throw std::invalid_argument("unknown x0 rule '" + init.x0_rule + "'");
  }
  if (init.b0_rule != "s_J_x0" && init.b0_rule != "s_J_star" && init.b0_rule != "explicit") {
    throw std::invalid_argument("unknown b0 rule '" + init.b0_rule + "'");
  }
  if (init.b0_rule == "explicit" && !init.b0) throw std::invalid_argument("b0 rule 'explicit' needs a b0 matrix");
  const std::string kind = normalize_kind(problem.kind);
  if (kind != "linear" && kind != "logsumexp" && kind != "chandrasekhar") {
    throw std::invalid_argument("unknown problem kind '" + problem.kind + "'");
  }
  if (kind == "chandrasekhar" ? problem.N < 1 : problem.n < 1) throw std::invalid_argument("dimension must be >= 1");
  if (kind == "logsumexp" && (problem.m < 1 || !(problem.gamma > 0.0))) {
    throw std::invalid_argument("logsumexp needs m >= 1 and gamma > 0");
  }
  if (lipschitz_M && !(*lipschitz_M >= 0.0)) throw std::invalid_argument("lipschitz M must be >= 0");
  if (lipschitz_samples < 1) throw std::invalid_argument("lipschitz samples must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

ExperimentConfig config_from_json(const nlohmann::json& doc, ExperimentConfig base) {
  ExperimentConfig cfg = std::move(base);
  if (doc.contains("problem")) {
    const auto& p = doc.at("problem");
    cfg.problem.kind = p.value("kind", cfg.problem.kind);
    cfg.problem.n = p.value("n", cfg.problem.n);
    cfg.problem.m = p.value("m", cfg.problem.m);
    cfg.problem.gamma = p.value("gamma", cfg.problem.gamma);
    cfg.problem.c = p.value("c", cfg.problem.c);
    cfg.problem.N = p.value("N", cfg.problem.N);
    if (p.contains("seed")) {
      if (p.at("seed").is_null()) {
        cfg.problem.seed.reset();
      } else {
        cfg.problem.seed = p.at("seed").get<std::uint64_t>();
      }
    }
  }
  if (doc.contains("init")) {
    const auto& i = doc.at("init");
    cfg.init.x0_rule = i.value("x0_rule", cfg.init.x0_rule);
    cfg.init.radius_factor = i.value("radius_factor", cfg.init.radius_factor);
    cfg.init.b0_rule = i.value("b0_rule", cfg.init.b0_rule);
    if (i.contains("b0") && !i.at("b0").is_null()) cfg.init.b0 = matrix_from_rows(i.at("b0"));
  }
  if (doc.contains("schemes")) {
    cfg.schemes.clear();
    for (const auto& name : doc.at("schemes")) cfg.schemes.push_back(scheme_from_string(name.get<std::string>()));
  }
  if (doc.contains("solver")) {
    const auto& s = doc.at("solver");
    cfg.solver.max_iters = s.value("max_iters", cfg.solver.max_iters);
    cfg.solver.tol_residual = s.value("tol_residual", cfg.solver.tol_residual);
    cfg.solver.breakdown_tol = s.value("breakdown_tol", cfg.solver.breakdown_tol);
    cfg.solver.skip_update_tol = s.value("skip_update_tol", cfg.solver.skip_update_tol);
    cfg.solver.divergence_factor = s.value("divergence_factor", cfg.solver.divergence_factor);
  }
  if (doc.contains("s_grid")) cfg.s_grid = doc.at("s_grid").get<std::vector<double>>();
  cfg.output_dir = doc.value("output_dir", cfg.output_dir);
  cfg.master_seed = doc.value("master_seed", cfg.master_seed);
  if (doc.contains("lipschitz")) {
    const auto& l = doc.at("lipschitz");
    if (l.contains("M")) {
      if (l.at("M").is_null()) {
        cfg.lipschitz_M.reset();
      } else {
        cfg.lipschitz_M = l.at("M").get<double>();
      }
    }
    cfg.lipschitz_samples = l.value("samples", cfg.lipschitz_samples);
  }
  cfg.verbose = doc.value("verbose", cfg.verbose);
  cfg.threads = doc.value("threads", cfg.threads);
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json doc;
  doc["problem"] = {{"kind", cfg.problem.kind}, {"n", cfg.problem.n},         {"m", cfg.problem.m},
                    {"gamma", cfg.problem.gamma}, {"c", cfg.problem.c},        {"N", cfg.problem.N},
                    {"seed", cfg.problem.seed ? nlohmann::json(*cfg.problem.seed) : nlohmann::json(nullptr)}};
  doc["init"] = {{"x0_rule", cfg.init.x0_rule},
                 {"radius_factor", cfg.init.radius_factor},
                 {"b0_rule", cfg.init.b0_rule},
                 {"b0", cfg.init.b0 ? matrix_rows(*cfg.init.b0) : nlohmann::json(nullptr)}};
  nlohmann::json schemes = nlohmann::json::array();
  for (Scheme s : cfg.schemes) schemes.push_back(to_string(s));
  doc["schemes"] = schemes;
  doc["solver"] = {{"max_iters", cfg.solver.max_iters},
                   {"tol_residual", cfg.solver.tol_residual},
                   {"breakdown_tol", cfg.solver.breakdown_tol},
                   {"skip_update_tol", cfg.solver.skip_update_tol},
                   {"divergence_factor", cfg.solver.divergence_factor}};
  doc["s_grid"] = cfg.s_grid;
  doc["output_dir"] = cfg.output_dir;
  doc["master_seed"] = cfg.master_seed;
  doc["lipschitz"] = {{"M", cfg.lipschitz_M ? nlohmann::json(*cfg.lipschitz_M) : nlohmann::json(nullptr)},
                      {"samples", cfg.lipschitz_samples}};
  doc["verbose"] = cfg.verbose;
  doc["threads"] = cfg.threads;
  return doc;
}

ProblemSpec build_problem(const ProblemConfig& cfg, std::uint64_t master_seed) {
  const std::uint64_t seed = cfg.seed ? *cfg.seed : Rng::derive_seed(master_seed, "problem");
  const std::string kind = normalize_kind(cfg.kind);
  if (kind == "linear") return linear_generate(cfg.n, seed);
  if (kind == "logsumexp") return logsumexp_generate(cfg.n, cfg.m, seed, cfg.gamma);
  if (kind == "chandrasekhar") return ChandrasekharProblem{cfg.c, cfg.N};
  throw std::invalid_argument("unknown problem kind '" + cfg.kind + "'");
}

Vector sample_unit_sphere(std::size_t dim, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("sample_unit_sphere: dim must be >= 1");
  Rng rng(seed);
  return rng.unit_sphere(dim);
}

ExperimentResult run_comparison(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;
  const ProblemSpec spec = build_problem(cfg.problem, cfg.master_seed);
  const ProblemInstance problem = make_instance(spec);
  res.problem_kind = problem_kind(spec);
  res.dim = problem.dim();

  try {
    res.reference = reference_solution(problem, reference_hint(spec, res.dim));
  } catch (const std::exception& e) {
    res.reference_error = e.what();
  }

  const std::uint64_t x0_seed = Rng::derive_seed(cfg.master_seed, "x0");
  if (cfg.init.x0_rule == "gaussian") {
    Rng rng(x0_seed);
    res.x0 = rng.normal_vector(res.dim);
  } else {
    if (!res.reference) throw std::runtime_error("x0 rule 'sphere' needs a reference solution: " + res.reference_error);
    const double scale = norm2(res.reference->x_star);
    // A numerically zero root (reference accuracy is about 1e-10) gets an absolute radius.
    const double radius = cfg.init.radius_factor * (scale > 1e-8 ? scale : 1.0);
    res.x0 = res.reference->x_star + radius * sample_unit_sphere(res.dim, x0_seed);
  }

  if (cfg.lipschitz_M) {
    res.M = *cfg.lipschitz_M;
    res.m_source = "supplied";
  } else if (problem.lipschitz()) {
    res.M = *problem.lipschitz();
    res.m_source = "supplied";
  } else if (res.reference) {
    const double r0 = norm2(res.x0 - res.reference->x_star);
    const double radius = r0 > 0.0 ? r0 : 1e-3;
    res.M = estimate_lipschitz_M(problem, res.reference->x_star, radius, cfg.lipschitz_samples,
                                 Rng::derive_seed(cfg.master_seed, "lipschitz"));
    res.m_source = "estimated";
  }

  const SharedSetup setup{problem, res.x0, res.reference, res.M, res.m_source};
  std::vector<std::pair<Scheme, double>> grid;
  for (double s : cfg.s_grid) {
    for (Scheme scheme : cfg.schemes) grid.emplace_back(scheme, s);
  }
  if (cfg.threads > 1) {
    std::vector<std::future<RunResult>> pending;
    for (const auto& [scheme, s] : grid) {
      pending.push_back(std::async(std::launch::async, [&, scheme = scheme, s = s] { return run_one(cfg, setup, scheme, s); }));
      if (pending.size() == static_cast<std::size_t>(cfg.threads)) {
        for (auto& f : pending) res.runs.push_back(f.get());
        pending.clear();
      }
    }
    for (auto& f : pending) res.runs.push_back(f.get());
  } else {
    for (const auto& [scheme, s] : grid) res.runs.push_back(run_one(cfg, setup, scheme, s));
  }
  return res;
}

std::optional<int> iterations_to(const SolveTrace& trace, double tol) {
  for (const auto& rec : trace.records) {
    if (rec.residual_norm <= tol) return rec.k;
  }
  return std::nullopt;
}

std::string run_label(const RunResult& run) { return std::string(to_string(run.scheme)) + "_s" + format_short(run.s); }

std::vector<std::string> emit_csv(const ExperimentResult& res, const std::string& dir) {
  ensure_dir(dir);
  std::vector<std::string> written;
  for (const RunResult& run : res.runs) {
    const PotentialTrace* pot = run.potentials ? &*run.potentials : nullptr;
    const bool good = run.scheme == Scheme::Good;
    const std::string sigma_name = good ? "sigma_update1" : "tau_update1";
    const std::string r_name = good ? "r_update" : "r_update_bad";

    auto cell = [](std::optional<double> v) { return v && std::isfinite(*v) ? format_double(*v) : std::string(); };
    std::string text = std::string(kCsvHeader) + "\n";
    for (std::size_t k = 0; k < run.trace.records.size(); ++k) {
      std::optional<double> r, lambda, level, bound, slack_sigma, slack_r;
      if (pot) {
        r = pot->r[k];
        lambda = pot->lambda[k];
        if (good && !pot->sigma.empty()) level = pot->sigma[k];
        if (run.scheme == Scheme::Bad && !pot->tau.empty()) level = pot->tau[k];
      }
      if (run.certificate && k < run.certificate->bound_curve.size()) bound = run.certificate->bound_curve[k];
      if (run.inequalities) {
        slack_sigma = run.inequalities->slack(static_cast<int>(k), sigma_name);
        slack_r = run.inequalities->slack(static_cast<int>(k), r_name);
      }
      text += std::to_string(k) + "," + cell(r) + "," + cell(lambda) + "," +
              format_double(run.trace.records[k].residual_norm) + "," + cell(level) + "," + cell(bound) + "," +
              cell(slack_sigma) + "," + cell(slack_r) + "\n";
    }
    const auto path = std::filesystem::path(dir) / (run_label(run) + ".csv");
    write_text(path, text);
    written.push_back(path.string());
  }
  return written;
}

nlohmann::json summary_to_json(const ExperimentResult& res) {
  nlohmann::json doc;
  doc["config"] = config_to_json(res.config);
  doc["problem_kind"] = res.problem_kind;
  doc["dim"] = res.dim;
  doc["x0"] = res.x0.std_vector();
  if (res.reference) {
    doc["reference"] = {{"mu", res.reference->mu},
                        {"L", res.reference->L},
                        {"kappa", res.reference->kappa},
                        {"x_star", res.reference->x_star.std_vector()}};
  } else {
    doc["reference"] = nullptr;
    doc["reference_error"] = res.reference_error;
  }
  doc["M"] = res.M;
  doc["m_source"] = res.m_source;
  nlohmann::json runs = nlohmann::json::array();
  for (const RunResult& run : res.runs) {
    nlohmann::json r;
    r["label"] = run_label(run);
    r["scheme"] = to_string(run.scheme);
    r["s"] = run.s;
    r["seed"] = run.seed;
    r["status"] = to_string(run.trace.status);
    r["iterations"] = run.trace.iterations();
    r["final_residual"] = run.trace.records.empty() ? nlohmann::json(nullptr) : nlohmann::json(run.trace.final_residual());
    const auto to_1e10 = iterations_to(run.trace, 1e-10);
    r["iterations_to_1e-10"] = to_1e10 ? nlohmann::json(*to_1e10) : nlohmann::json(nullptr);
    if (run.certificate) {
      r["certified"] = run.certificate->certified();
      r["q_m"] = run.certificate->q_m ? nlohmann::json(*run.certificate->q_m) : nlohmann::json(nullptr);
      r["first_violation"] = run.certificate->first_violation ? nlohmann::json(*run.certificate->first_violation)
                                                              : nlohmann::json(nullptr);
    }
    if (run.inequalities) r["inequalities_satisfied"] = run.inequalities->all_satisfied();
    if (!run.note.empty()) r["note"] = run.note;
    runs.push_back(std::move(r));
  }
  doc["runs"] = std::move(runs);
  return doc;
}

void write_outputs(const ExperimentResult& res, const std::string& dir) {
  emit_csv(res, dir);
  write_text(std::filesystem::path(dir) / "summary.json", summary_to_json(res).dump(2) + "\n");
  for (const RunResult& run : res.runs) {
    nlohmann::json doc;
    doc["trace"] = trace_to_json(run.trace, res.config.verbose);
    if (run.potentials) doc["potentials"] = potentials_to_json(*run.potentials);
    if (run.certificate) doc["certificate"] = certificate_to_json(*run.certificate);
    if (run.inequalities) doc["inequalities"] = report_to_json(*run.inequalities);
    write_text(std::filesystem::path(dir) / (run_label(run) + ".json"), doc.dump(2) + "\n");
  }
}

}  // namespace broyden

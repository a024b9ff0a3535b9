// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "broyden/harness.hpp"
#include "broyden/rng.hpp"

using namespace broyden;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// (F_k, λ_k) pairs and the (μ, L) they were measured against.
struct SandwichSample {
  std::vector<double> F;
  std::vector<double> lambda;
  double mu = 0.0;
  double L = 0.0;
  std::string label;
};

std::vector<SandwichSample> g_sandwich;

void record_sandwich(const PotentialTrace& pot, const ReferenceSolution& ref, const std::string& label) {
  g_sandwich.push_back({pot.F, pot.lambda, ref.mu, ref.L, label});
}

ProblemInstance random_problem(int i, Vector& x0) {
  const std::size_t n = 2 + static_cast<std::size_t>(i) % 19;
  Rng rng(Rng::derive_seed(1000, static_cast<std::uint64_t>(i)));
  if (i % 2 == 0) {
    x0 = 0.5 * rng.normal_vector(n);
    return make_instance(logsumexp_generate(n, 2 * n, static_cast<std::uint64_t>(i), 0.5));
  }
  x0 = Vector::constant(n, 1.0) + 0.1 * rng.normal_vector(n);
  return make_instance(ChandrasekharProblem{0.9, n});
}

// ---------------------------------------------------------------- criteria

Outcome secant_and_least_change() {
  Outcome out;
  SolverConfig cfg;
  cfg.diagnostics = true;
  int checked = 0;
  for (int i = 0; i < 50; ++i) {
    Vector x0;
    const ProblemInstance p = random_problem(i, x0);
    const Matrix j0 = p.jacobian(x0);

    const SolveTrace good = broyden_good_solve(p, x0, j0, cfg);
    for (std::size_t k = 0; k + 1 < good.approx_jacobians.size(); ++k) {
      const auto& rec = good.records[k];
      if (!rec.has_step || rec.update_skipped) continue;
      const Matrix& next = good.approx_jacobians[k + 1];
      const double scale = frobenius_norm(next) * norm2(rec.step) + norm2(rec.change);
      if (norm2(next * rec.step - rec.change) > 1e-9 * scale) out.fail(fmt("good secant violated, problem %g step %g", i, k));
      if (!least_change_check(good.approx_jacobians[k], next, rec.step, rec.change, 100, 7 + k)) {
        out.fail(fmt("good least-change violated, problem %g step %g", i, k));
      }
      ++checked;
    }

    const SolveTrace bad = broyden_bad_solve(p, x0, inverse(j0), cfg);
    for (std::size_t k = 0; k + 1 < bad.approx_inverses.size(); ++k) {
      const auto& rec = bad.records[k];
      if (!rec.has_step || rec.update_skipped) continue;
      const Matrix& next = bad.approx_inverses[k + 1];
      const double scale = frobenius_norm(next) * norm2(rec.change) + norm2(rec.step);
      if (norm2(next * rec.change - rec.step) > 1e-9 * scale) out.fail(fmt("bad secant violated, problem %g step %g", i, k));
      if (!least_change_check(bad.approx_inverses[k], next, rec.change, rec.step, 100, 7 + k)) {
        out.fail(fmt("bad least-change violated, problem %g step %g", i, k));
      }
      ++checked;
    }
  }
  if (out.pass) out.detail = std::to_string(checked) + " updates checked";
  return out;
}

Outcome smw_equivalence() {
  Outcome out;
  SolverConfig cfg;
  cfg.diagnostics = true;
  cfg.max_iters = 30;
  double worst = 0.0;
  std::size_t longest = 0;
  for (int i = 0; i < 40; ++i) {
    Vector x0;
    const ProblemInstance p = random_problem(i, x0);
    // scaled starts (B0 = s·J(x0)) give longer runs
    Matrix b0 = p.jacobian(x0);
    b0 *= i < 20 ? 1.0 : 0.3;
    const SolveTrace t = broyden_good_solve(p, x0, b0, cfg);
    longest = std::max(longest, t.iterations());
    for (std::size_t k = 0; k < t.approx_jacobians.size(); ++k) {
      const Matrix direct = inverse(t.approx_jacobians[k]);
      const double err = frobenius_norm(t.approx_inverses[k] - direct) / frobenius_norm(direct);
      worst = std::max(worst, err);
    }
  }
  if (worst > 1e-7) out.fail(fmt("relative Frobenius error %.3e", worst));
  else out.detail = fmt("max relative Frobenius error %.3e, longest run %g iterations", worst, static_cast<double>(longest));
  return out;
}

Outcome linear_exactness() {
  Outcome out;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 2 + seed % 19;
    const LinearSystem ls = linear_generate(n, seed);
    const ProblemInstance p = make_instance(ls);
    Rng rng(seed + 500);
    const Vector x0 = 10.0 * rng.normal_vector(n);
    const SolveTrace g = broyden_good_solve(p, x0, ls.a);
    const SolveTrace b = broyden_bad_solve(p, x0, inverse(ls.a));
    const SolveTrace nt = newton_solve(p, x0);
    for (const SolveTrace* t : {&g, &b, &nt}) {
      if (t->status != SolveStatus::Converged || t->iterations() != 1) {
        out.fail(std::string(to_string(t->scheme)) + " took " + std::to_string(t->iterations()) +
                 " iterations on seed " + std::to_string(seed));
      }
    }
  }
  return out;
}

Outcome certify_trajectory(Scheme scheme) {
  Outcome out;
  const auto lse = logsumexp_generate(5, 10, 2024, 1.0);
  const ProblemInstance p = make_instance(lse);
  const ReferenceSolution ref = reference_solution(p, Vector(5));

  // M is estimated on a ball, δ is then chosen with a factor-4 margin and M
  // re-estimated on the final radius.
  double M = estimate_lipschitz_M(p, ref.x_star, 1e-2, 400, 17);
  const double limit = scheme == Scheme::Good ? ref.mu / (96.0 * M) : ref.mu / (56.0 * ref.kappa * M);
  const double delta = 0.25 * limit;
  M = std::max(M, estimate_lipschitz_M(p, ref.x_star, delta, 400, 18));

  SolverConfig cfg;
  cfg.diagnostics = true;
  const Vector x0 = ref.x_star + delta * sample_unit_sphere(5, 99);
  const SolveTrace t = scheme == Scheme::Good ? broyden_good_solve(p, x0, ref.j_star, cfg)
                                              : broyden_bad_solve(p, x0, ref.j_star_inv, cfg);
  if (t.status != SolveStatus::Converged) out.fail(std::string("run ended with status ") + to_string(t.status));

  const PotentialTrace pot = compute_potentials(t, ref, scheme);
  record_sandwich(pot, ref, std::string("certified ") + to_string(scheme));
  const RateCertificate cert = certify(pot, ref, M, "estimated");
  if (!cert.conditions.theorem_condition) out.fail(fmt("initial condition unmet, margin %.3e", cert.conditions.theorem_margin));
  if (!cert.certified()) out.fail("no certificate");
  if (cert.first_envelope_violation) out.fail(fmt("r envelope violated at k = %g", *cert.first_envelope_violation));
  if (cert.first_violation) out.fail(fmt("rate bound violated at k = %g", *cert.first_violation));

  const StepInequalityReport rep = check_step_inequalities(t, pot, ref, p, M, scheme);
  double worst = INFINITY;
  for (const auto& name : rep.names) {
    const double s = rep.min_slack(name);
    if (!std::isnan(s)) worst = std::min(worst, s);
  }
  if (!rep.all_satisfied()) out.fail(fmt("min step slack %.3e", worst));
  if (out.pass) {
    out.detail = fmt("q_m = %.3e, %g iterations, min slack %.3e", cert.q_m.value_or(NAN),
                     static_cast<double>(t.iterations()), worst);
  }
  return out;
}

Outcome qm_sandwich() {
  Outcome out;
  Rng rng(31337);
  for (int i = 0; i < 1000; ++i) {
    const double s0 = rng.uniform(0.0, 1.0 / 3.0);
    const double a = rng.uniform(0.0, (1.0 / 3.0 - s0) / 32.0);
    const auto q = qm_good(s0, a);
    const double theta = s0 + std::sqrt(a);
    if (!q) {
      out.fail(fmt("good q_m missing for sigma0 = %.6g, a = %.6g", s0, a));
      continue;
    }
    if (*q < 0.5 * theta - 1e-12 || *q > 6.0 * theta + 1e-12) out.fail(fmt("good q_m %.6g outside [%.6g, %.6g]", *q, 0.5 * theta, 6.0 * theta));
    if (std::abs(qm_good_objective(*q, s0) - 8.0 * a) > 1e-10) out.fail(fmt("good f(q_m) misses target at %.6g", *q));

    const double kappa = std::exp(rng.uniform(0.0, std::log(1000.0)));
    const double t0 = rng.uniform(0.0, 1.0 / (2.0 * kappa));
    const double b = rng.uniform(0.0, (1.0 / (2.0 * kappa) - t0) / 28.0);
    const auto qb = qm_bad(t0, b, kappa);
    const double theta_b = kappa * t0 + std::sqrt(kappa * b);
    if (!qb) {
      out.fail(fmt("bad q_m missing for tau0 = %.6g, a = %.6g, kappa = %.6g", t0, b, kappa));
      continue;
    }
    if (*qb < 0.5 * theta_b - 1e-12 || *qb > 4.0 * theta_b + 1e-12) {
      out.fail(fmt("bad q_m %.6g outside [%.6g, %.6g]", *qb, 0.5 * theta_b, 4.0 * theta_b));
    }
    if (std::abs(qm_bad_objective(*qb, t0, kappa) - 7.0 * b) > 1e-10) out.fail(fmt("bad f(q_m) misses target at %.6g", *qb));
  }
  return out;
}

bool strictly_decreasing_tail(const SolveTrace& t, std::string& why) {
  const auto& r = t.records;
  if (r.size() < 4) {
    why = "fewer than three residual ratios";
    return false;
  }
  const std::size_t n = r.size();
  const double q1 = r[n - 3].residual_norm / r[n - 4].residual_norm;
  const double q2 = r[n - 2].residual_norm / r[n - 3].residual_norm;
  const double q3 = r[n - 1].residual_norm / r[n - 2].residual_norm;
  why = fmt("ratios %.3e, %.3e, %.3e", q1, q2, q3);
  return q1 > q2 && q2 > q3;
}

Outcome hequation_reproduction() {
  Outcome out;
  ExperimentConfig cfg;
  cfg.problem.kind = "chandrasekhar";
  cfg.problem.c = 0.9;
  cfg.problem.N = 100;
  cfg.init.x0_rule = "sphere";
  cfg.init.radius_factor = 0.1;
  cfg.init.b0_rule = "s_J_x0";
  cfg.s_grid = {0.1, 1.0};
  const ExperimentResult res = run_comparison(cfg);
  if (!res.reference) {
    out.fail("no reference solution: " + res.reference_error);
    return out;
  }

  std::map<std::pair<double, Scheme>, const RunResult*> by_key;
  for (const RunResult& run : res.runs) {
    by_key[{run.s, run.scheme}] = &run;
    if (run.potentials) record_sandwich(*run.potentials, *res.reference, "H-equation " + run_label(run));
  }

  const auto good_small = iterations_to(by_key.at({0.1, Scheme::Good})->trace, 1e-10);
  const auto bad_small = iterations_to(by_key.at({0.1, Scheme::Bad})->trace, 1e-10);
  std::string detail = "s=0.1: good " + (good_small ? std::to_string(*good_small) : std::string("fail")) + ", bad " +
                       (bad_small ? std::to_string(*bad_small) : std::string("fail"));
  if (!good_small) out.fail("good scheme with s = 0.1 did not reach 1e-10");
  else if (bad_small && *bad_small < 1.5 * *good_small) out.fail(detail + " (bad needs >= 1.5x good)");

  for (Scheme scheme : {Scheme::Good, Scheme::Bad}) {
    const RunResult* run = by_key.at({1.0, scheme});
    std::string why;
    if (run->trace.status != SolveStatus::Converged) {
      out.fail(std::string(to_string(scheme)) + " with s = 1 did not converge");
    } else if (!strictly_decreasing_tail(run->trace, why)) {
      out.fail(std::string(to_string(scheme)) + " with s = 1: " + why);
    }
    detail += std::string("; s=1 ") + to_string(scheme) + " " + std::to_string(run->trace.iterations()) + " it";
  }
  if (out.pass) out.detail = detail;
  return out;
}

Outcome norm_sandwich() {
  Outcome out;
  std::size_t points = 0;
  for (const auto& s : g_sandwich) {
    for (std::size_t k = 0; k < s.F.size(); ++k) {
      ++points;
      if (s.F[k] / s.L > s.lambda[k] * (1.0 + 1e-9)) out.fail(s.label + fmt(": F/L > lambda at k = %g", k));
      if (s.lambda[k] > s.F[k] / s.mu * (1.0 + 1e-9)) out.fail(s.label + fmt(": lambda > F/mu at k = %g", k));
    }
  }
  if (points == 0) out.fail("no iterates collected");
  if (out.pass) out.detail = std::to_string(points) + " iterates over " + std::to_string(g_sandwich.size()) + " runs";
  return out;
}

std::map<std::string, std::string> read_tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[std::filesystem::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

Outcome determinism() {
  Outcome out;
  // Same config, output directory included: the second run replaces the first.
  const auto dir = std::filesystem::current_path() / "acceptance_determinism";
  const std::string cmd = std::string("\"") + BROYDEN_CLI_PATH +
                          "\" compare --problem logsumexp --n 8 --m 16 --seed 7 --out \"" + dir.string() +
                          "\" > /dev/null";
  std::vector<std::map<std::string, std::string>> trees;
  for (int pass = 0; pass < 2; ++pass) {
    std::filesystem::remove_all(dir);
    if (std::system(cmd.c_str()) != 0) {
      out.fail("compare exited nonzero");
      return out;
    }
    trees.push_back(read_tree(dir));
  }
  if (trees[0].empty()) out.fail("compare wrote no files");
  if (trees[0] != trees[1]) out.fail("outputs differ");
  if (out.pass) out.detail = std::to_string(trees[0].size()) + " files identical";
  std::filesystem::remove_all(dir);
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    double limit_seconds;  // 0 when unbounded
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "secant and least-change invariants", 10.0, secant_and_least_change},
      {2, "inverse update matches direct inverse", 0.0, smw_equivalence},
      {3, "linear exactness", 0.0, linear_exactness},
      {4, "trajectory certification", 0.0,
       [] {
         Outcome out;
         for (Scheme scheme : {Scheme::Good, Scheme::Bad}) {
           const auto start = std::chrono::steady_clock::now();
           Outcome one = certify_trajectory(scheme);
           const double secs = seconds_since(start);
           if (secs > 5.0) one.fail(fmt("runtime %.2f s over 5 s", secs));
           const std::string tag = std::string(to_string(scheme)) + ": ";
           if (!one.pass) out.fail(tag + one.detail);
           else out.detail += (out.detail.empty() ? "" : "; ") + tag + one.detail;
         }
         return out;
       }},
      {5, "q_m sandwich and root property", 0.0, qm_sandwich},
      {6, "H-equation good-vs-bad ordering", 30.0, hequation_reproduction},
      {7, "norm sandwich", 0.0, norm_sandwich},
      {8, "determinism of compare", 0.0, determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.fail(std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(start);
    if (c.limit_seconds > 0.0 && secs > c.limit_seconds) out.fail(fmt("runtime %.2f s over %.0f s", secs, c.limit_seconds));
    if (!out.pass) ++failures;
    std::printf("%s criterion %d: %s (%.2f s)%s%s\n", out.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                out.detail.empty() ? "" : " - ", out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

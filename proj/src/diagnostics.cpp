#include "broyden/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace broyden {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kBisectionTol = 1e-12;
constexpr double kTheoremSlack = 1e-15;

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

template <class T>
nlohmann::json optional_or_null(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

// Smallest q in [lo, hi] with f(q) ≥ target, f increasing on the interval.
template <class F>
double bisect_increasing(F f, double lo, double hi, double target) {
  if (f(lo) >= target) return lo;
  for (int it = 0; it < 200 && hi - lo > kBisectionTol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// max over q in (0,1) of f(q): dense grid followed by golden-section polish
// around the best grid point.
template <class F>
double maximize_on_unit_interval(F f) {
  constexpr int kGrid = 4000;
  int best = 1;
  double best_val = f(1.0 / kGrid);
  for (int i = 2; i < kGrid; ++i) {
    const double v = f(static_cast<double>(i) / kGrid);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = static_cast<double>(best - 1) / kGrid;
  double b = static_cast<double>(best + 1) / kGrid;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 100; ++it) {
    const double c = b - phi * (b - a);
    const double d = a + phi * (b - a);
    if (f(c) > f(d)) {
      b = d;
    } else {
      a = c;
    }
  }
  return std::max(best_val, f(0.5 * (a + b)));
}

bool good_theorem_holds(double sigma0, double a) { return 32.0 * a + sigma0 <= 1.0 / 3.0 + kTheoremSlack; }
bool bad_theorem_holds(double tau0, double a, double kappa) {
  return 28.0 * a + tau0 <= 1.0 / (2.0 * kappa) + kTheoremSlack;
}

void require_nonnegative(double v, const char* what) {
  if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + " must be a nonnegative number");
}

}  // namespace

// ------------------------------------------------------------ reference root

ReferenceSolution reference_from_jacobian(Vector x_star, Matrix j_star) {
  ReferenceSolution ref;
  try {
    ref.j_star_inv = inverse(j_star);
  } catch (const SingularMatrix& e) {
    throw DegenerateSolution(std::string("Jacobian at the root is singular: ") + e.what());
  }
  ref.x_star = std::move(x_star);
  ref.j_star = std::move(j_star);
  ref.L = spectral_norm(ref.j_star);
  ref.mu = 1.0 / spectral_norm(ref.j_star_inv);
  ref.kappa = ref.L / ref.mu;
  return ref;
}

ReferenceSolution reference_solution(const ProblemInstance& p, const Vector& x_hint, int max_iters) {
  if (!p.has_jacobian()) throw std::invalid_argument("reference_solution: problem has no analytic Jacobian");
  SolverConfig cfg;
  cfg.max_iters = max_iters;
  cfg.tol_residual = 1e-13;
  const SolveTrace trace = newton_solve(p, x_hint, cfg);
  if (trace.records.empty() || !(trace.final_residual() <= 1e-10)) {
    throw NoConvergence("reference_solution: Newton ended with status " + std::string(to_string(trace.status)));
  }
  // A couple of extra Newton steps below the stopping tolerance, kept only
  // while they reduce the residual.
  Vector x = trace.final_x;
  double fx = trace.final_residual();
  for (int polish = 0; polish < 2 && fx > 0.0; ++polish) {
    try {
      const Vector candidate = x - lu_solve(lu_factor(p.jacobian(x)), p.residual(x));
      const double fc = norm2(p.residual(candidate));
      if (!(fc < fx)) break;
      x = candidate;
      fx = fc;
    } catch (const std::exception&) {
      break;
    }
  }
  return reference_from_jacobian(x, p.jacobian(x));
}

// ---------------------------------------------------------------- potentials

double sigma_potential(const Matrix& b, const ReferenceSolution& ref) {
  return frobenius_norm(ref.j_star_inv * (b - ref.j_star));
}

double tau_potential(const Matrix& h, const ReferenceSolution& ref) {
  return frobenius_norm(ref.j_star * (h - ref.j_star_inv));
}

PotentialTrace compute_potentials(const SolveTrace& trace, const ReferenceSolution& ref, Scheme scheme) {
  PotentialTrace out;
  out.scheme = scheme;
  const std::size_t n = trace.records.size();
  if (scheme == Scheme::Good && trace.approx_jacobians.size() < n) {
    throw MissingSnapshots("compute_potentials: good-scheme trace lacks B_k snapshots");
  }
  if (scheme == Scheme::Bad && trace.approx_inverses.size() < n) {
    throw MissingSnapshots("compute_potentials: bad-scheme trace lacks H_k snapshots");
  }
  out.r.reserve(n);
  out.lambda.reserve(n);
  out.F.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const IterationRecord& rec = trace.records[k];
    out.r.push_back(norm2(rec.x - ref.x_star));
    out.lambda.push_back(norm2(ref.j_star_inv * rec.residual));
    out.F.push_back(rec.residual_norm);
    if (scheme == Scheme::Good) out.sigma.push_back(sigma_potential(trace.approx_jacobians[k], ref));
    if (scheme == Scheme::Bad) out.tau.push_back(tau_potential(trace.approx_inverses[k], ref));
  }
  return out;
}

// ---------------------------------------------------------------- quadrature

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int nodes) {
  if (nodes < 1) throw std::invalid_argument("gauss_legendre: nodes must be >= 1");
  const auto n = static_cast<std::size_t>(nodes);
  std::vector<double> t(n);
  std::vector<double> w(n);
  // Newton on P_n, roots on [-1, 1] then mapped to [0, 1].
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        const auto jd = static_cast<double>(j);
        p0 = ((2.0 * jd - 1.0) * z * p1 - (jd - 1.0) * p2) / jd;
      }
      dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) <= 1e-16) break;
    }
    const double weight = 2.0 / ((1.0 - z * z) * dp * dp);
    t[i] = 0.5 * (1.0 - z);
    t[n - 1 - i] = 0.5 * (1.0 + z);
    w[i] = 0.5 * weight;
    w[n - 1 - i] = 0.5 * weight;
  }
  return {t, w};
}

Matrix integral_jacobian(const ProblemInstance& p, const Vector& x_from, const Vector& x_to, int nodes) {
  const auto [t, w] = gauss_legendre(nodes);
  const Vector d = x_to - x_from;
  Matrix acc(p.dim(), p.dim());
  for (std::size_t i = 0; i < t.size(); ++i) {
    Matrix j = p.jacobian(x_from + t[i] * d);
    j *= w[i];
    acc += j;
  }
  return acc;
}

// ------------------------------------------------------- step inequalities

double StepInequalityReport::min_slack(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown inequality '" + name + "'");
  const auto j = static_cast<std::size_t>(it - names.begin());
  double best = kNaN;
  for (const auto& row : slacks) {
    if (std::isnan(row[j])) continue;
    if (std::isnan(best) || row[j] < best) best = row[j];
  }
  return best;
}

std::optional<double> StepInequalityReport::slack(int k, const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown inequality '" + name + "'");
  const auto j = static_cast<std::size_t>(it - names.begin());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] == k && !std::isnan(slacks[i][j])) return slacks[i][j];
  }
  return std::nullopt;
}

bool StepInequalityReport::all_satisfied() const {
  for (const auto& row : slacks) {
    for (double s : row) {
      if (!std::isnan(s) && s < -padding) return false;
    }
  }
  return true;
}

StepInequalityReport check_step_inequalities(const SolveTrace& trace, const PotentialTrace& potentials,
                                             const ReferenceSolution& ref, const ProblemInstance& p, double M,
                                             Scheme scheme) {
  if (scheme == Scheme::Newton) throw std::invalid_argument("check_step_inequalities: scheme must be good or bad");
  if (!(M >= 0.0)) throw std::invalid_argument("check_step_inequalities: M must be nonnegative");
  if (potentials.size() != trace.records.size()) {
    throw std::invalid_argument("check_step_inequalities: potentials do not match the trace");
  }
  const bool good = scheme == Scheme::Good;
  const std::vector<double>& level = good ? potentials.sigma : potentials.tau;
  if (level.size() != potentials.size()) throw MissingSnapshots("check_step_inequalities: missing σ_k / τ_k");
  const std::vector<Matrix>& snaps = good ? trace.approx_jacobians : trace.approx_inverses;
  if (snaps.size() < trace.records.size()) throw MissingSnapshots("check_step_inequalities: missing snapshots");

  StepInequalityReport report;
  report.scheme = scheme;
  report.names = good ? std::vector<std::string>{"sigma_update1", "sigma_update2", "r_update", "lemma_j1", "lemma_j2"}
                      : std::vector<std::string>{"tau_update1", "tau_update2", "r_update_bad", "lemma_j1", "lemma_j2"};
  if (potentials.size() < 2) return report;

  const double floor = kRoundingFloor * potentials.F.front();
  const double mu = ref.mu;
  for (std::size_t k = 0; k + 1 < trace.records.size(); ++k) {
    const IterationRecord& rec = trace.records[k];
    if (potentials.F[k] <= floor) break;
    if (!rec.has_step || rec.update_skipped) continue;

    const Vector& u = rec.step;
    const Vector& y = rec.change;
    const Vector& x_next = trace.records[k + 1].x;
    const double rk = potentials.r[k];
    const double rk1 = potentials.r[k + 1];
    const double lk = level[k];
    const double lk1 = level[k + 1];
    Matrix jk;
    try {
      jk = integral_jacobian(p, rec.x, x_next);
    } catch (const PoleEncountered&) {
      continue;
    }

    std::vector<double> row(5, kNaN);
    if (good) {
      const Matrix& bk = snaps[k];
      const double uu = dot(u, u);
      const double jbar = spectral_norm(ref.j_star_inv * (jk - ref.j_star));
      const double common = 2.0 * (lk * jbar + jbar * jbar);
      const double drop1 = std::pow(norm2(ref.j_star_inv * ((jk - bk) * u)), 2) / uu;
      row[0] = lk * lk - drop1 + common - lk1 * lk1;
      if (potentials.lambda[k] > 0.0) {
        const double ratio = potentials.lambda[k + 1] / potentials.lambda[k];
        const double drop2 = ratio * ratio * std::pow(norm2(ref.j_star_inv * (bk * u)), 2) / uu;
        row[1] = lk * lk - drop2 + common - lk1 * lk1;
      }
      if (lk < 1.0) row[2] = (M * rk / (2.0 * mu) + lk) / (1.0 - lk) * rk - rk1;
    } else {
      const Matrix& hk = snaps[k];
      const double yy = dot(y, y);
      try {
        const Matrix jk_inv = inverse(jk);
        const double jtilde = spectral_norm(ref.j_star * (jk_inv - ref.j_star_inv));
        const double common = 2.0 * (lk * jtilde + jtilde * jtilde);
        const double drop1 = std::pow(norm2(ref.j_star * ((jk_inv - hk) * y)), 2) / yy;
        row[0] = lk * lk - drop1 + common - lk1 * lk1;

        const Matrix jh = ref.j_star * hk;
        const double perturb = spectral_norm((jk - ref.j_star) * ref.j_star_inv);
        const double denom =
            std::pow(1.0 + perturb, 2) * std::pow(spectral_norm(jh), 2) * std::pow(spectral_norm(inverse(jh)), 2);
        if (potentials.F[k] > 0.0) {
          const double ratio = potentials.F[k + 1] / potentials.F[k];
          row[1] = lk * lk - ratio * ratio / denom + common - lk1 * lk1;
        }
      } catch (const SingularMatrix&) {
        // J_k or J_*H_k singular: the τ recursions are not defined here.
      }
      row[2] = (ref.kappa * lk + (1.0 + lk) * M * rk / (2.0 * mu)) * rk - rk1;
    }
    row[3] = 0.5 * M * (rk + rk1) - spectral_norm(jk - ref.j_star);
    row[4] = 0.5 * M * rk * rk - norm2(rec.residual - ref.j_star * (rec.x - ref.x_star));

    report.steps.push_back(static_cast<int>(k));
    report.slacks.push_back(std::move(row));
  }
  return report;
}

// ------------------------------------------------------------- rate bounds

double qm_good_objective(double q, double sigma0) { return q * (1.0 - q) * (q / (1.0 + q) - sigma0); }

double qm_bad_objective(double q, double tau0, double kappa) { return q * (1.0 - q) * (q / kappa - tau0); }

std::optional<double> qm_good(double sigma0, double mr0_over_mu) {
  require_nonnegative(sigma0, "sigma0");
  require_nonnegative(mr0_over_mu, "Mr0/mu");
  if (!good_theorem_holds(sigma0, mr0_over_mu)) return std::nullopt;
  const double lo = sigma0 / (1.0 - sigma0);
  return bisect_increasing([&](double q) { return qm_good_objective(q, sigma0); }, lo, 0.5, 8.0 * mr0_over_mu);
}

std::optional<double> qm_bad(double tau0, double mr0_over_mu, double kappa) {
  require_nonnegative(tau0, "tau0");
  require_nonnegative(mr0_over_mu, "Mr0/mu");
  if (!(kappa >= 1.0)) throw std::invalid_argument("qm_bad: kappa must be >= 1");
  if (!bad_theorem_holds(tau0, mr0_over_mu, kappa)) return std::nullopt;
  const double lo = std::min(kappa * tau0, 0.5);
  return bisect_increasing([&](double q) { return qm_bad_objective(q, tau0, kappa); }, lo, 0.5,
                           7.0 * mr0_over_mu);
}

std::vector<double> bound_curve_good(double sigma0, double mr0_over_mu, double lambda0, int k_max) {
  const auto q = qm_good(sigma0, mr0_over_mu);
  if (!q) throw InitialConditionUnmet("bound_curve_good: 32·Mr0/mu + sigma0 > 1/3");
  const double theta = 6.0 * (sigma0 + std::sqrt(mr0_over_mu));
  std::vector<double> curve{lambda0};
  for (int k = 1; k <= k_max; ++k) {
    const double kd = k;
    const double lemma = std::pow(*q * *q / kd, kd / 2.0);
    const double theorem = std::pow(theta / std::sqrt(kd), kd);
    curve.push_back(std::min(lemma, theorem) * lambda0);
  }
  return curve;
}

std::vector<double> bound_curve_bad(double tau0, double mr0_over_mu, double kappa, double F0, int k_max) {
  const auto q = qm_bad(tau0, mr0_over_mu, kappa);
  if (!q) throw InitialConditionUnmet("bound_curve_bad: 28·Mr0/mu + tau0 > 1/(2 kappa)");
  if (*q > std::min(0.5 * kappa, 1.0)) throw InitialConditionUnmet("bound_curve_bad: q_m exceeds min(kappa/2, 1)");
  std::vector<double> curve{F0};
  for (int k = 1; k <= k_max; ++k) {
    const double kd = k;
    curve.push_back(std::pow(10.0 * *q * *q / (kd * kappa * kappa), kd / 2.0) * F0);
  }
  return curve;
}

std::vector<double> bound_curve_bad_lambda(double tau0, double mr0_over_mu, double kappa, double lambda0,
                                           int k_max) {
  const auto q = qm_bad(tau0, mr0_over_mu, kappa);
  if (!q) throw InitialConditionUnmet("bound_curve_bad_lambda: 28·Mr0/mu + tau0 > 1/(2 kappa)");
  if (*q > std::min(0.5 * kappa, 1.0)) {
    throw InitialConditionUnmet("bound_curve_bad_lambda: q_m exceeds min(kappa/2, 1)");
  }
  const double theta = 13.0 * (tau0 + std::sqrt(mr0_over_mu / kappa));
  std::vector<double> curve{lambda0};
  for (int k = 1; k <= k_max; ++k) {
    const double kd = k;
    const double lemma = std::pow(10.0 * *q * *q / (kd * kappa * kappa), kd / 2.0);
    const double theorem = std::pow(theta / std::sqrt(kd), kd);
    curve.push_back(kappa * std::min(lemma, theorem) * lambda0);
  }
  return curve;
}

InitialConditionVerdict check_initial_conditions(double sigma_or_tau0, double mr0_over_mu, double kappa,
                                                 Scheme scheme) {
  require_nonnegative(sigma_or_tau0, "sigma0/tau0");
  require_nonnegative(mr0_over_mu, "Mr0/mu");
  InitialConditionVerdict v;
  v.scheme = scheme;
  const double s0 = sigma_or_tau0;
  const double a = mr0_over_mu;
  if (scheme == Scheme::Good) {
    v.theorem_margin = 1.0 / 3.0 - (32.0 * a + s0);
    v.theorem_condition = good_theorem_holds(s0, a);
    v.lemma_margin = maximize_on_unit_interval([&](double q) { return qm_good_objective(q, s0); }) - 8.0 * a;
  } else if (scheme == Scheme::Bad) {
    if (!(kappa >= 1.0)) throw std::invalid_argument("check_initial_conditions: kappa must be >= 1");
    v.theorem_margin = 1.0 / (2.0 * kappa) - (28.0 * a + s0);
    v.theorem_condition = bad_theorem_holds(s0, a, kappa);
    v.lemma_margin = maximize_on_unit_interval([&](double q) { return qm_bad_objective(q, s0, kappa); }) - 7.0 * a;
    const auto q = qm_bad(s0, a, kappa);
    v.q_cap_ok = !q || *q <= std::min(0.5 * kappa, 1.0);
  } else {
    throw std::invalid_argument("check_initial_conditions: scheme must be good or bad");
  }
  // With a = 0 the supremum f → 0 as q → 0 is not attained inside (0, 1).
  v.lemma_condition = a > 0.0 ? v.lemma_margin >= 0.0 : v.lemma_margin > 0.0;
  return v;
}

BanachBounds banach_bound_check(const Matrix& e) {
  if (!e.square()) throw DimensionMismatch("banach_bound_check: E must be square");
  const double ne = spectral_norm(e);
  if (!(ne < 1.0)) throw NormTooLarge("banach_bound_check: ‖E‖ >= 1");
  const Matrix identity = Matrix::identity(e.rows());
  const Matrix inv = inverse(identity - e);
  BanachBounds out;
  out.inverse_norm = spectral_norm(inv);
  out.difference_norm = spectral_norm(inv - identity);
  out.inverse_bound = 1.0 / (1.0 - ne);
  out.difference_bound = ne / (1.0 - ne);
  return out;
}

// ------------------------------------------------------------- certificate

RateCertificate certify(const PotentialTrace& potentials, const ReferenceSolution& ref, double M,
                        std::string m_source) {
  if (potentials.scheme == Scheme::Newton) throw std::invalid_argument("certify: scheme must be good or bad");
  if (potentials.size() == 0) throw std::invalid_argument("certify: empty potential trace");
  if (!(M >= 0.0)) throw std::invalid_argument("certify: M must be nonnegative");
  const bool good = potentials.scheme == Scheme::Good;
  const std::vector<double>& level = good ? potentials.sigma : potentials.tau;
  if (level.empty()) throw MissingSnapshots("certify: missing σ_0 / τ_0");

  RateCertificate cert;
  cert.scheme = potentials.scheme;
  cert.M = M;
  cert.m_source = std::move(m_source);
  cert.mr0_over_mu = M * potentials.r.front() / ref.mu;
  cert.conditions = check_initial_conditions(level.front(), cert.mr0_over_mu, ref.kappa, cert.scheme);
  cert.q_m = good ? qm_good(level.front(), cert.mr0_over_mu) : qm_bad(level.front(), cert.mr0_over_mu, ref.kappa);
  cert.observed_curve = good ? potentials.lambda : potentials.F;

  const int k_max = static_cast<int>(potentials.size()) - 1;
  if (cert.conditions.theorem_condition && cert.conditions.q_cap_ok) {
    cert.bound_curve = good ? bound_curve_good(level.front(), cert.mr0_over_mu, potentials.lambda.front(), k_max)
                            : bound_curve_bad(level.front(), cert.mr0_over_mu, ref.kappa, potentials.F.front(), k_max);
  }

  const double f_floor = kRoundingFloor * potentials.F.front();
  const double obs_floor = kRoundingFloor * cert.observed_curve.front();
  if (cert.certified()) {
    for (int k = 1; k <= k_max; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      if (potentials.F[ku] <= f_floor) break;
      if (cert.observed_curve[ku] > cert.bound_curve[ku] * (1.0 + 1e-9) + obs_floor) {
        cert.first_violation = k;
        break;
      }
    }
  }
  if (cert.q_m) {
    for (int k = 0; k < k_max; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      if (potentials.F[ku] <= f_floor) break;
      if (potentials.r[ku + 1] > *cert.q_m * potentials.r[ku] + 1e-12) {
        cert.first_envelope_violation = k;
        break;
      }
    }
  }
  return cert;
}

nlohmann::json potentials_to_json(const PotentialTrace& potentials) {
  nlohmann::json doc;
  doc["scheme"] = to_string(potentials.scheme);
  doc["r"] = potentials.r;
  doc["lambda"] = potentials.lambda;
  doc["F"] = potentials.F;
  if (!potentials.sigma.empty()) doc["sigma"] = potentials.sigma;
  if (!potentials.tau.empty()) doc["tau"] = potentials.tau;
  return doc;
}

nlohmann::json report_to_json(const StepInequalityReport& report) {
  nlohmann::json doc;
  doc["scheme"] = to_string(report.scheme);
  doc["padding"] = report.padding;
  doc["names"] = report.names;
  doc["all_satisfied"] = report.all_satisfied();
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t i = 0; i < report.steps.size(); ++i) {
    nlohmann::json row;
    row["k"] = report.steps[i];
    nlohmann::json slacks;
    for (std::size_t j = 0; j < report.names.size(); ++j) slacks[report.names[j]] = number_or_null(report.slacks[i][j]);
    row["slacks"] = std::move(slacks);
    steps.push_back(std::move(row));
  }
  doc["steps"] = std::move(steps);
  return doc;
}

nlohmann::json certificate_to_json(const RateCertificate& cert) {
  nlohmann::json doc;
  doc["scheme"] = to_string(cert.scheme);
  doc["q_m"] = optional_or_null(cert.q_m);
  doc["M"] = cert.M;
  doc["m_source"] = cert.m_source;
  doc["mr0_over_mu"] = cert.mr0_over_mu;
  doc["certified"] = cert.certified();
  nlohmann::json cond;
  cond["theorem_condition"] = cert.conditions.theorem_condition;
  cond["theorem_margin"] = cert.conditions.theorem_margin;
  cond["lemma_condition"] = cert.conditions.lemma_condition;
  cond["lemma_margin"] = cert.conditions.lemma_margin;
  cond["q_cap_ok"] = cert.conditions.q_cap_ok;
  doc["initial_conditions"] = std::move(cond);
  doc["bound_curve"] = cert.bound_curve;
  doc["observed_curve"] = cert.observed_curve;
  doc["first_violation"] = optional_or_null(cert.first_violation);
  doc["first_envelope_violation"] = optional_or_null(cert.first_envelope_violation);
  return doc;
}

}  // namespace broyden

#pragma once

// Convergence potentials, per-step inequality checks and explicit rate
// bounds evaluated along solver trajectories.

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "broyden/linalg.hpp"
#include "broyden/problems.hpp"
#include "broyden/solvers.hpp"
#include "json.hpp"

namespace broyden {

class NoConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateSolution : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingSnapshots : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InitialConditionUnmet : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NormTooLarge : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// ------------------------------------------------------------ reference root

struct ReferenceSolution {
  Vector x_star;
  Matrix j_star;
  Matrix j_star_inv;
  double mu = 0.0;     // 1 / ‖J_*⁻¹‖
  double L = 0.0;      // ‖J_*‖
  double kappa = 0.0;  // L / μ
};

/// Newton refinement from `x_hint`, aiming at ‖F‖ ≤ 1e-13.
/// Throws NoConvergence if ‖F(x_*)‖ > 1e-10 afterwards and
/// DegenerateSolution if J(x_*) does not factor.
ReferenceSolution reference_solution(const ProblemInstance& p, const Vector& x_hint, int max_iters = 100);

/// Builds μ, L, κ for a known root and Jacobian (no refinement).
ReferenceSolution reference_from_jacobian(Vector x_star, Matrix j_star);

// ---------------------------------------------------------------- potentials

/// Per-iterate r_k, λ_k, F_k; σ_k for good runs, τ_k for bad runs.
/// Vectors that do not apply to the scheme are empty.
struct PotentialTrace {
  Scheme scheme = Scheme::Newton;
  std::vector<double> r;
  std::vector<double> lambda;
  std::vector<double> F;
  std::vector<double> sigma;
  std::vector<double> tau;

  std::size_t size() const noexcept { return r.size(); }
};

/// σ = ‖J_*⁻¹(B − J_*)‖_F.
double sigma_potential(const Matrix& b, const ReferenceSolution& ref);
/// τ = ‖J_*(H − J_*⁻¹)‖_F.
double tau_potential(const Matrix& h, const ReferenceSolution& ref);

/// Throws MissingSnapshots when the trace lacks the B_k (good) or H_k (bad)
/// snapshots needed for σ_k / τ_k.
PotentialTrace compute_potentials(const SolveTrace& trace, const ReferenceSolution& ref, Scheme scheme);

// ---------------------------------------------------------------- quadrature

/// Gauss-Legendre nodes and weights mapped to [0, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int nodes);

inline constexpr int kIntegralJacobianNodes = 16;

/// ∫₀¹ J(x_from + t(x_to − x_from)) dt.
Matrix integral_jacobian(const ProblemInstance& p, const Vector& x_from, const Vector& x_to,
                         int nodes = kIntegralJacobianNodes);

// ------------------------------------------------------- step inequalities

inline constexpr double kInequalityPadding = 1e-7;
inline constexpr double kRoundingFloor = 1e-14;

/// slacks[i][j] = RHS − LHS of inequality names[j] at step steps[i]; NaN
/// where the inequality does not apply (e.g. σ_k ≥ 1 for the r-recursion).
struct StepInequalityReport {
  Scheme scheme = Scheme::Good;
  std::vector<std::string> names;
  std::vector<int> steps;
  std::vector<std::vector<double>> slacks;
  double padding = kInequalityPadding;

  /// NaN when no step evaluated the inequality.
  double min_slack(const std::string& name) const;
  /// Slack of `name` at step k, if evaluated.
  std::optional<double> slack(int k, const std::string& name) const;
  bool all_satisfied() const;
};

/// Good scheme: sigma_update1, sigma_update2, r_update, lemma_j1, lemma_j2.
/// Bad scheme: tau_update1, tau_update2, r_update_bad, lemma_j1, lemma_j2.
///
/// J_k is the 16-node integral Jacobian. Steps stop once
/// F_k ≤ 1e-14·F_0; steps whose update was skipped are left out.
StepInequalityReport check_step_inequalities(const SolveTrace& trace, const PotentialTrace& potentials,
                                             const ReferenceSolution& ref, const ProblemInstance& p, double M,
                                             Scheme scheme);

// ------------------------------------------------------------- rate bounds

/// f(q) = q(1−q)(q/(1+q) − σ₀).
double qm_good_objective(double q, double sigma0);
/// f(q) = q(1−q)(q/κ − τ₀).
double qm_bad_objective(double q, double tau0, double kappa);

/// Smallest q in [σ₀/(1−σ₀), ½] with f(q) ≥ 8·Mr₀/μ; empty when
/// 32·Mr₀/μ + σ₀ > ⅓.
std::optional<double> qm_good(double sigma0, double mr0_over_mu);
/// Smallest q in [κτ₀, ½] with f(q) ≥ 7·Mr₀/μ; empty when
/// 28·Mr₀/μ + τ₀ > 1/(2κ).
std::optional<double> qm_bad(double tau0, double mr0_over_mu, double kappa);

/// Index 0 holds λ₀; entry k ≥ 1 is min([q_m²/k]^{k/2}, [6(σ₀+√(Mr₀/μ))/√k]^k)·λ₀.
/// Throws InitialConditionUnmet when 32·Mr₀/μ + σ₀ > ⅓.
std::vector<double> bound_curve_good(double sigma0, double mr0_over_mu, double lambda0, int k_max);

/// Index 0 holds F₀; entry k ≥ 1 is [10q_m²/(kκ²)]^{k/2}·F₀.
/// Throws InitialConditionUnmet when 28·Mr₀/μ + τ₀ > 1/(2κ) or q_m
/// exceeds min(κ/2, 1).
std::vector<double> bound_curve_bad(double tau0, double mr0_over_mu, double kappa, double F0, int k_max);

/// λ-form of the bad-scheme bound: min(κ[10q_m²/(kκ²)]^{k/2},
/// κ[13(τ₀+√(Mr₀/L))/√k]^k)·λ₀, with Mr₀/L = (Mr₀/μ)/κ.
std::vector<double> bound_curve_bad_lambda(double tau0, double mr0_over_mu, double kappa, double lambda0,
                                           int k_max);

struct InitialConditionVerdict {
  Scheme scheme = Scheme::Good;
  /// 32a + σ₀ ≤ ⅓ (good) or 28a + τ₀ ≤ 1/(2κ) (bad), a = Mr₀/μ.
  bool theorem_condition = false;
  double theorem_margin = 0.0;
  /// Some q in (0,1) satisfies both lemma constraints.
  bool lemma_condition = false;
  /// max over q in (0,1) of f(q) − target.
  double lemma_margin = 0.0;
  /// Bad scheme only: q_m ≤ min(κ/2, 1).
  bool q_cap_ok = true;
};

InitialConditionVerdict check_initial_conditions(double sigma_or_tau0, double mr0_over_mu, double kappa,
                                                 Scheme scheme);

struct BanachBounds {
  double inverse_norm = 0.0;       // ‖(I−E)⁻¹‖
  double difference_norm = 0.0;    // ‖(I−E)⁻¹ − I‖
  double inverse_bound = 0.0;      // 1/(1−‖E‖)
  double difference_bound = 0.0;   // ‖E‖/(1−‖E‖)

  bool within(double rel_tol = 1e-10) const {
    return inverse_norm <= inverse_bound * (1.0 + rel_tol) && difference_norm <= difference_bound * (1.0 + rel_tol);
  }
};

/// Throws NormTooLarge when ‖E‖ ≥ 1.
BanachBounds banach_bound_check(const Matrix& e);

// ------------------------------------------------------------- certificate

struct RateCertificate {
  Scheme scheme = Scheme::Good;
  std::optional<double> q_m;
  InitialConditionVerdict conditions;
  double M = 0.0;
  std::string m_source;  // "supplied" or "estimated"
  double mr0_over_mu = 0.0;
  /// λ_k bounds (good) or F_k bounds (bad); empty when uncertified.
  std::vector<double> bound_curve;
  /// Observed λ_k (good) or F_k (bad).
  std::vector<double> observed_curve;
  /// First k where the observed value exceeds the bound above the floor.
  std::optional<int> first_violation;
  /// First k where r_{k+1} > q_m·r_k + 1e-12.
  std::optional<int> first_envelope_violation;

  bool certified() const noexcept { return !bound_curve.empty(); }
};

RateCertificate certify(const PotentialTrace& potentials, const ReferenceSolution& ref, double M,
                        std::string m_source);

nlohmann::json potentials_to_json(const PotentialTrace& potentials);
nlohmann::json report_to_json(const StepInequalityReport& report);
nlohmann::json certificate_to_json(const RateCertificate& cert);

}  // namespace broyden

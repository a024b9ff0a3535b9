#pragma once

// Experiment orchestration: initialization recipes, B0 = s·J sweeps,
// good-vs-bad comparisons and CSV/JSON emission.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "broyden/diagnostics.hpp"
#include "broyden/linalg.hpp"
#include "broyden/problems.hpp"
#include "broyden/solvers.hpp"
#include "json.hpp"

namespace broyden {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProblemConfig {
  std::string kind = "logsumexp";  // linear | logsumexp | chandrasekhar
  std::size_t n = 10;              // linear, logsumexp
  std::size_t m = 30;              // logsumexp terms
  double gamma = 1.0;
  double c = 0.9;                  // chandrasekhar
  std::size_t N = 100;             // chandrasekhar grid
  /// Generator seed; derived from the master seed when absent.
  std::optional<std::uint64_t> seed;
};

struct InitConfig {
  /// "gaussian": x0 ~ N(0, I).
  /// "sphere": x0 = x_* + radius_factor·‖x_*‖·ε, ε uniform on the unit
  /// sphere; radius_factor is used as an absolute radius when ‖x_*‖ ≤ 1e-8.
  std::string x0_rule = "gaussian";
  double radius_factor = 0.1;
  /// "s_J_x0": B0 = s·J(x0). "s_J_star": B0 = s·J(x_*).
  /// "explicit": B0 = s·b0. The bad scheme starts from H0 = B0⁻¹.
  std::string b0_rule = "s_J_x0";
  std::optional<Matrix> b0;
};

struct ExperimentConfig {
  ProblemConfig problem;
  InitConfig init;
  std::vector<Scheme> schemes{Scheme::Good, Scheme::Bad};
  SolverConfig solver;
  std::vector<double> s_grid{1.0};
  std::string output_dir;
  std::uint64_t master_seed = 42;
  /// Supplied Lipschitz constant; estimated by sampling when absent.
  std::optional<double> lipschitz_M;
  int lipschitz_samples = 200;
  bool verbose = false;
  /// Grid points run concurrently when > 1. Outputs do not depend on it.
  int threads = 1;

  /// Throws std::invalid_argument on an empty s-grid, negative radius factor,
  /// unknown rule names or an invalid solver config.
  void validate() const;
};

/// Fields missing from `doc` keep their values from `base`.
ExperimentConfig config_from_json(const nlohmann::json& doc, ExperimentConfig base = {});
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Builds the problem; a missing generator seed is derived from `master_seed`.
ProblemSpec build_problem(const ProblemConfig& cfg, std::uint64_t master_seed);

/// Standard normal draw normalized to unit length.
Vector sample_unit_sphere(std::size_t dim, std::uint64_t seed);

struct RunResult {
  Scheme scheme = Scheme::Good;
  double s = 1.0;
  std::uint64_t seed = 0;
  SolveTrace trace;
  std::optional<PotentialTrace> potentials;
  std::optional<StepInequalityReport> inequalities;
  std::optional<RateCertificate> certificate;
  /// Set when the run could not start (singular B0) or diagnostics failed.
  std::string note;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string problem_kind;
  std::size_t dim = 0;
  Vector x0;
  std::optional<ReferenceSolution> reference;
  std::string reference_error;
  double M = 0.0;
  std::string m_source;
  /// Ordered by s-grid, then by scheme list.
  std::vector<RunResult> runs;
};

/// Shared x0 for every run; one RunResult per (s, scheme).
ExperimentResult run_comparison(const ExperimentConfig& cfg);

/// First k with ‖F(x_k)‖ ≤ tol.
std::optional<int> iterations_to(const SolveTrace& trace, double tol);

/// File stem of a run, e.g. "good_s0.1".
std::string run_label(const RunResult& run);

inline constexpr const char* kCsvHeader = "k,r,lambda,F,sigma_or_tau,bound,slack_sigma_rec,slack_r_rec";

/// One CSV per run under `dir`; returns the written paths. Throws IoError.
std::vector<std::string> emit_csv(const ExperimentResult& res, const std::string& dir);

nlohmann::json summary_to_json(const ExperimentResult& res);

/// CSVs, summary.json and one <label>.json per run (trace, potentials,
/// certificate, step inequalities). Throws IoError.
void write_outputs(const ExperimentResult& res, const std::string& dir);

}  // namespace broyden

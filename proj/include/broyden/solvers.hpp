#pragma once

// Newton's method and Broyden's "good" and "bad" quasi-Newton schemes.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "broyden/linalg.hpp"
#include "broyden/problems.hpp"
#include "json.hpp"

namespace broyden {

enum class SolveStatus {
  Converged,
  MaxIters,
  Breakdown,
  Singular,
  Diverged,
  Stagnated,
};

const char* to_string(SolveStatus status) noexcept;

enum class Scheme { Newton, Good, Bad };

const char* to_string(Scheme scheme) noexcept;
/// Accepts "newton", "good", "bad".
Scheme scheme_from_string(const std::string& name);

struct SolverConfig {
  int max_iters = 200;
  double tol_residual = 1e-12;
  /// Good scheme: relative floor on |uᵀHy| / (‖u‖‖Hy‖).
  /// Bad scheme: relative floor on ‖y‖ / max(‖F(x_k)‖, ‖F(x_{k+1})‖).
  double breakdown_tol = 1e-14;
  /// Steps with ‖u‖ ≤ skip_update_tol · (1 + ‖x‖) end the run.
  double skip_update_tol = 1e-15;
  double divergence_factor = 1e12;
  /// Record B_k / H_k snapshots for the diagnostics layer.
  bool diagnostics = false;

  /// Throws std::invalid_argument on non-positive tolerances or max_iters < 1.
  void validate() const;
};

/// One iterate. The step fields describe the move x_k → x_{k+1}; the
/// terminal record of a trace carries zero step and change vectors.
struct IterationRecord {
  int k = 0;
  Vector x;
  double residual_norm = 0.0;
  Vector residual;  // F(x_k)
  Vector step;    // u_k
  Vector change;  // y_k
  double update_denominator = 0.0;
  bool update_skipped = false;
  bool has_step = false;
};

struct SolveTrace {
  Scheme scheme = Scheme::Newton;
  SolveStatus status = SolveStatus::MaxIters;
  std::vector<IterationRecord> records;
  Vector final_x;
  /// Good scheme, diagnostics on: explicit B_k maintained alongside H_k.
  std::vector<Matrix> approx_jacobians;
  /// Good and bad schemes, diagnostics on: H_k.
  std::vector<Matrix> approx_inverses;
  std::string message;

  std::size_t iterations() const noexcept { return records.empty() ? 0 : records.size() - 1; }
  double initial_residual() const { return records.front().residual_norm; }
  double final_residual() const { return records.back().residual_norm; }
};

SolveTrace newton_solve(const ProblemInstance& p, const Vector& x0, const SolverConfig& cfg = {});

/// Good scheme in inverse form: H_k = B_k⁻¹ is updated by Sherman-Morrison.
/// With cfg.diagnostics the explicit B_k of the analysis form is carried too.
SolveTrace broyden_good_solve(const ProblemInstance& p, const Vector& x0, const Matrix& b0,
                              const SolverConfig& cfg = {});

SolveTrace broyden_bad_solve(const ProblemInstance& p, const Vector& x0, const Matrix& h0,
                             const SolverConfig& cfg = {});

/// Checks that `next` is the least-change secant update of `prev` in the
/// Frobenius norm: every feasible matrix next + W(I − uuᵀ/uᵀu) is at least as
/// far from `prev`. Random W of log-uniform scale; the first trial is W = 0.
///
/// For the bad scheme pass (H_k, H_{k+1}, y_k, u_k).
bool least_change_check(const Matrix& prev, const Matrix& next, const Vector& u, const Vector& y, int trials,
                        std::uint64_t seed);

/// Serialized trace: per-record {k, residual_norm, step_norm,
/// update_denominator, skipped}, status and final_x. With `verbose` each
/// record also carries its x vector.
nlohmann::json trace_to_json(const SolveTrace& trace, bool verbose);

}  // namespace broyden

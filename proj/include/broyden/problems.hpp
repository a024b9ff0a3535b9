#pragma once

// Nonlinear systems F(x) = 0 and the concrete test instances.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "broyden/linalg.hpp"
#include "json.hpp"

namespace broyden {

class PoleEncountered : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using ResidualFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

/// Type-erased system F: Rⁿ → Rⁿ with an optional analytic Jacobian and an
/// optional known Lipschitz constant of J relative to the root.
///
/// Instances are immutable; copies share the underlying callables.
class ProblemInstance {
 public:
  ProblemInstance(std::string name, std::size_t dim, ResidualFn residual,
                  std::optional<JacobianFn> jacobian = std::nullopt,
                  std::optional<double> lipschitz = std::nullopt);

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return dim_; }
  bool has_jacobian() const noexcept { return static_cast<bool>(jacobian_); }
  std::optional<double> lipschitz() const noexcept { return lipschitz_; }

  /// Throws DimensionMismatch when x or the result has the wrong length.
  Vector residual(const Vector& x) const;
  /// Throws std::logic_error when no analytic Jacobian is attached.
  Matrix jacobian(const Vector& x) const;

 private:
  std::string name_;
  std::size_t dim_;
  std::shared_ptr<const ResidualFn> residual_;
  std::shared_ptr<const JacobianFn> jacobian_;
  std::optional<double> lipschitz_;
};

// ------------------------------------------------------------------ linear

/// F(x) = A x − b; J(x) = A; Lipschitz constant 0.
struct LinearSystem {
  Matrix a;
  Vector b;
  std::uint64_t seed = 0;
};

/// A = I·2 + U[-1,1]/√n entries, b ~ U[-1,1]: comfortably nonsingular.
LinearSystem linear_generate(std::size_t n, std::uint64_t seed);
ProblemInstance make_instance(const LinearSystem& p);

// ------------------------------------------------------------ log-sum-exp

/// Gradient system of the regularized log-sum-exp function
///
///   f(x) = ln Σ exp(c_jᵀx − b_j) + ½ Σ (c_jᵀx)² + (γ/2)‖x‖²,
///
/// with columns c_j of C (n×m).
struct LogSumExpProblem {
  Matrix c;
  Vector b;
  double gamma = 1.0;
  std::uint64_t seed = 0;

  std::size_t dim() const noexcept { return c.rows(); }
  std::size_t terms() const noexcept { return c.cols(); }
};

/// Draws ĉ_j, b_j ~ U[-1,1] and shifts every column by ∇f̂(0) so that
/// x_* = 0 is the minimizer (F(0) = 0).
LogSumExpProblem logsumexp_generate(std::size_t n, std::size_t m, std::uint64_t seed, double gamma = 1.0);

/// Max-shifted softmax weights π_j(x).
Vector logsumexp_weights(const LogSumExpProblem& p, const Vector& x);
double logsumexp_value(const LogSumExpProblem& p, const Vector& x);
Vector logsumexp_F(const LogSumExpProblem& p, const Vector& x);
Matrix logsumexp_J(const LogSumExpProblem& p, const Vector& x);
ProblemInstance make_instance(const LogSumExpProblem& p);

// ------------------------------------------------------------ H-equation

/// Midpoint discretization of the Chandrasekhar H-equation:
///
///   F_i(x) = x_i − (1 − c/(2N) Σ_j μ_i x_j / (μ_i + μ_j))⁻¹,  μ_i = (i − ½)/N.
struct ChandrasekharProblem {
  double c = 0.9;
  std::size_t n = 100;

  Vector nodes() const;
};

/// Throws PoleEncountered when any bracket has magnitude below 1e-14.
Vector chandrasekhar_F(const ChandrasekharProblem& p, const Vector& x);
Matrix chandrasekhar_J(const ChandrasekharProblem& p, const Vector& x);
ProblemInstance make_instance(const ChandrasekharProblem& p);

// ----------------------------------------------------------------- utilities

inline constexpr double kFiniteDifferenceStep = 1e-6;

/// Central differences, column by column.
Matrix finite_difference_jacobian(const ResidualFn& f, const Vector& x, double h = kFiniteDifferenceStep);

/// Sampled estimate of M in ‖J(x) − J(x_*)‖ ≤ M‖x − x_*‖.
///
/// Draws `samples` points uniformly from the ball of `radius` around x_*,
/// takes the largest ratio and inflates it by 1.5.
double estimate_lipschitz_M(const ProblemInstance& p, const Vector& x_star, double radius, int samples,
                            std::uint64_t seed);

// ------------------------------------------------------------ serialization

using ProblemSpec = std::variant<LinearSystem, LogSumExpProblem, ChandrasekharProblem>;

ProblemInstance make_instance(const ProblemSpec& spec);
std::string problem_kind(const ProblemSpec& spec);

/// {kind, dim, seed, payload} document. Byte-stable for identical inputs.
nlohmann::json problem_to_json(const ProblemSpec& spec);
ProblemSpec problem_from_json(const nlohmann::json& doc);

}  // namespace broyden

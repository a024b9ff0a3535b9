#include "broyden/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>

#include "broyden/rng.hpp"

namespace broyden {

const char* to_string(SolveStatus status) noexcept {
  switch (status) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIters: return "MaxIters";
    case SolveStatus::Breakdown: return "Breakdown";
    case SolveStatus::Singular: return "Singular";
    case SolveStatus::Diverged: return "Diverged";
    case SolveStatus::Stagnated: return "Stagnated";
  }
  return "Unknown";
}

const char* to_string(Scheme scheme) noexcept {
  switch (scheme) {
    case Scheme::Newton: return "newton";
    case Scheme::Good: return "good";
    case Scheme::Bad: return "bad";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "newton") return Scheme::Newton;
  if (name == "good") return Scheme::Good;
  if (name == "bad") return Scheme::Bad;
  throw std::invalid_argument("unknown scheme '" + name + "'");
}

void SolverConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
  if (!(tol_residual > 0.0) || !(breakdown_tol > 0.0) || !(skip_update_tol > 0.0) || !(divergence_factor > 0.0)) {
    throw std::invalid_argument("SolverConfig: tolerances must be positive");
  }
}

namespace {

struct UpdateOutcome {
  double denominator = 0.0;
  bool breakdown = false;
};

class NewtonMethod {
 public:
  explicit NewtonMethod(const ProblemInstance& p) : p_(p) {}
  Vector direction(const Vector& x, const Vector& fx) { return -lu_solve(lu_factor(p_.jacobian(x)), fx); }
  UpdateOutcome update(const Vector&, const Vector&, const Vector&, const Vector&) { return {}; }
  void snapshot(SolveTrace&) const {}

 private:
  const ProblemInstance& p_;
};

class GoodBroyden {
 public:
  GoodBroyden(const Matrix& b0, const SolverConfig& cfg)
      : h_(inverse(b0)), b_(cfg.diagnostics ? b0 : Matrix()), cfg_(cfg) {}

  Vector direction(const Vector&, const Vector& fx) { return -(h_ * fx); }

  UpdateOutcome update(const Vector& u, const Vector& y, const Vector&, const Vector&) {
    const Vector hy = h_ * y;
    UpdateOutcome out;
    out.denominator = dot(u, hy);
    if (!(std::abs(out.denominator) >= cfg_.breakdown_tol * norm2(u) * norm2(hy)) || out.denominator == 0.0) {
      out.breakdown = true;
      return out;
    }
    try {
      h_ = sherman_morrison_inverse_update(h_, u, y);
    } catch (const BreakdownDenominator&) {
      out.breakdown = true;
      return out;
    }
    if (cfg_.diagnostics) {
      Vector residual = y - b_ * u;
      residual *= 1.0 / dot(u, u);
      b_ = rank_one_update(b_, residual, u);
    }
    return out;
  }

  void snapshot(SolveTrace& trace) const {
    if (!cfg_.diagnostics) return;
    trace.approx_jacobians.push_back(b_);
    trace.approx_inverses.push_back(h_);
  }

 private:
  Matrix h_;
  Matrix b_;
  const SolverConfig& cfg_;
};

class BadBroyden {
 public:
  BadBroyden(const Matrix& h0, const SolverConfig& cfg) : h_(h0), cfg_(cfg) {
    if (!h_.square()) throw DimensionMismatch("broyden_bad_solve: H0 must be square");
    if (!h_.all_finite()) throw NonFiniteValue("broyden_bad_solve: H0 has non-finite entries");
  }

  Vector direction(const Vector&, const Vector& fx) { return -(h_ * fx); }

  UpdateOutcome update(const Vector& u, const Vector& y, const Vector& f_old, const Vector& f_new) {
    UpdateOutcome out;
    out.denominator = dot(y, y);
    const double scale = std::max(norm2(f_old), norm2(f_new));
    if (out.denominator == 0.0 || !(norm2(y) > cfg_.breakdown_tol * scale)) {
      out.breakdown = true;
      return out;
    }
    Vector residual = u - h_ * y;
    residual *= 1.0 / out.denominator;
    h_ = rank_one_update(h_, residual, y);
    return out;
  }

  void snapshot(SolveTrace& trace) const {
    if (cfg_.diagnostics) trace.approx_inverses.push_back(h_);
  }

 private:
  Matrix h_;
  const SolverConfig& cfg_;
};

IterationRecord make_record(int k, const Vector& x, const Vector& fx) {
  IterationRecord rec;
  rec.k = k;
  rec.x = x;
  rec.residual = fx;
  rec.residual_norm = norm2(fx);
  rec.step = Vector(x.size());
  rec.change = Vector(x.size());
  return rec;
}

template <class Method>
SolveTrace drive(const ProblemInstance& p, const Vector& x0, const SolverConfig& cfg, Method& method,
                 SolveTrace trace) {
  Vector x = x0;
  Vector fx = p.residual(x);
  if (!fx.all_finite()) {
    trace.status = SolveStatus::Diverged;
    trace.message = "F(x0) is not finite";
    trace.final_x = x;
    return trace;
  }
  const double f0 = norm2(fx);
  method.snapshot(trace);

  auto finish = [&](SolveStatus status, std::string message = {}) {
    trace.status = trace.records.back().residual_norm <= cfg.tol_residual ? SolveStatus::Converged : status;
    trace.message = std::move(message);
    trace.final_x = trace.records.back().x;
  };

  for (int k = 0;; ++k) {
    IterationRecord rec = make_record(k, x, fx);
    if (rec.residual_norm <= cfg.tol_residual) {
      trace.records.push_back(std::move(rec));
      finish(SolveStatus::Converged);
      break;
    }
    if (k >= cfg.max_iters) {
      trace.records.push_back(std::move(rec));
      finish(SolveStatus::MaxIters);
      break;
    }

    Vector u;
    try {
      u = method.direction(x, fx);
    } catch (const SingularMatrix& e) {
      trace.records.push_back(std::move(rec));
      finish(SolveStatus::Singular, e.what());
      break;
    }
    Vector x_new = x + u;
    Vector f_new;
    try {
      f_new = p.residual(x_new);
    } catch (const PoleEncountered& e) {
      trace.records.push_back(std::move(rec));
      finish(SolveStatus::Diverged, e.what());
      break;
    }
    if (!u.all_finite() || !f_new.all_finite()) {
      trace.records.push_back(std::move(rec));
      finish(SolveStatus::Diverged, "non-finite iterate");
      break;
    }

    Vector y = f_new - fx;
    rec.has_step = true;
    rec.step = u;
    rec.change = y;
    const double f_new_norm = norm2(f_new);

    if (f_new_norm > cfg.divergence_factor * f0) {
      rec.update_skipped = true;
      trace.records.push_back(std::move(rec));
      trace.records.push_back(make_record(k + 1, x_new, f_new));
      method.snapshot(trace);
      finish(SolveStatus::Diverged, "residual exceeded divergence guard");
      break;
    }

    if (norm2(u) <= cfg.skip_update_tol * (1.0 + norm2(x))) {
      rec.update_skipped = true;
      trace.records.push_back(std::move(rec));
      trace.records.push_back(make_record(k + 1, x_new, f_new));
      method.snapshot(trace);
      finish(SolveStatus::Stagnated, "step below skip_update_tol");
      break;
    }

    const UpdateOutcome outcome = method.update(u, y, fx, f_new);
    rec.update_denominator = outcome.denominator;
    rec.update_skipped = outcome.breakdown;
    trace.records.push_back(std::move(rec));
    x = std::move(x_new);
    fx = std::move(f_new);
    method.snapshot(trace);

    if (outcome.breakdown) {
      trace.records.push_back(make_record(k + 1, x, fx));
      finish(SolveStatus::Breakdown, "update denominator vanished");
      break;
    }
  }
  return trace;
}

}  // namespace

SolveTrace newton_solve(const ProblemInstance& p, const Vector& x0, const SolverConfig& cfg) {
  cfg.validate();
  if (!p.has_jacobian()) throw std::invalid_argument("newton_solve: problem has no analytic Jacobian");
  NewtonMethod method(p);
  SolveTrace trace;
  trace.scheme = Scheme::Newton;
  return drive(p, x0, cfg, method, std::move(trace));
}

SolveTrace broyden_good_solve(const ProblemInstance& p, const Vector& x0, const Matrix& b0,
                              const SolverConfig& cfg) {
  cfg.validate();
  SolveTrace trace;
  trace.scheme = Scheme::Good;
  if (b0.rows() != p.dim() || b0.cols() != p.dim()) throw DimensionMismatch("broyden_good_solve: B0 shape");
  std::optional<GoodBroyden> method;
  try {
    method.emplace(b0, cfg);
  } catch (const SingularMatrix& e) {
    trace.status = SolveStatus::Singular;
    trace.message = e.what();
    trace.records.push_back(make_record(0, x0, p.residual(x0)));
    trace.final_x = x0;
    return trace;
  }
  return drive(p, x0, cfg, *method, std::move(trace));
}

SolveTrace broyden_bad_solve(const ProblemInstance& p, const Vector& x0, const Matrix& h0, const SolverConfig& cfg) {
  cfg.validate();
  if (h0.rows() != p.dim() || h0.cols() != p.dim()) throw DimensionMismatch("broyden_bad_solve: H0 shape");
  BadBroyden method(h0, cfg);
  SolveTrace trace;
  trace.scheme = Scheme::Bad;
  return drive(p, x0, cfg, method, std::move(trace));
}

bool least_change_check(const Matrix& prev, const Matrix& next, const Vector& u, const Vector& y, int trials,
                        std::uint64_t seed) {
  const double uu = dot(u, u);
  if (uu == 0.0) return false;
  if (norm2(next * u - y) > 1e-10 * (frobenius_norm(next) * norm2(u) + norm2(y))) return false;

  const double base = frobenius_norm(next - prev);
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    Matrix w(next.rows(), next.cols());
    if (t > 0) {
      w = rng.uniform_matrix(next.rows(), next.cols(), -1.0, 1.0);
      w *= std::pow(10.0, rng.uniform(-8.0, 0.0));
    }
    // W (I − uuᵀ/uᵀu) keeps the secant condition intact.
    Vector wu = w * u;
    wu *= -1.0 / uu;
    const Matrix feasible = next + rank_one_update(w, wu, u);
    if (frobenius_norm(feasible - prev) < base - 1e-9) return false;
  }
  return true;
}

nlohmann::json trace_to_json(const SolveTrace& trace, bool verbose) {
  nlohmann::json doc;
  doc["scheme"] = to_string(trace.scheme);
  doc["status"] = to_string(trace.status);
  doc["iterations"] = trace.iterations();
  doc["message"] = trace.message;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : trace.records) {
    nlohmann::json r;
    r["k"] = rec.k;
    r["residual_norm"] = rec.residual_norm;
    r["step_norm"] = rec.has_step ? norm2(rec.step) : 0.0;
    r["update_denominator"] = rec.update_denominator;
    r["skipped"] = rec.update_skipped;
    if (verbose) r["x"] = rec.x.std_vector();
    records.push_back(std::move(r));
  }
  doc["records"] = std::move(records);
  doc["final_x"] = trace.final_x.std_vector();
  return doc;
}

}  // namespace broyden

#include "broyden/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "broyden/rng.hpp"

namespace broyden {

// ------------------------------------------------------------ ProblemInstance

ProblemInstance::ProblemInstance(std::string name, std::size_t dim, ResidualFn residual,
                                 std::optional<JacobianFn> jacobian, std::optional<double> lipschitz)
    : name_(std::move(name)),
      dim_(dim),
      residual_(std::make_shared<const ResidualFn>(std::move(residual))),
      jacobian_(jacobian ? std::make_shared<const JacobianFn>(std::move(*jacobian)) : nullptr),
      lipschitz_(lipschitz) {
  if (dim_ == 0) throw std::invalid_argument("ProblemInstance: dimension must be positive");
}

Vector ProblemInstance::residual(const Vector& x) const {
  if (x.size() != dim_) throw DimensionMismatch("residual: x has length " + std::to_string(x.size()));
  Vector fx = (*residual_)(x);
  if (fx.size() != dim_) throw DimensionMismatch("residual: F(x) has length " + std::to_string(fx.size()));
  return fx;
}

Matrix ProblemInstance::jacobian(const Vector& x) const {
  if (!jacobian_) throw std::logic_error("problem '" + name_ + "' has no analytic Jacobian");
  if (x.size() != dim_) throw DimensionMismatch("jacobian: x has length " + std::to_string(x.size()));
  Matrix j = (*jacobian_)(x);
  if (j.rows() != dim_ || j.cols() != dim_) throw DimensionMismatch("jacobian: wrong shape");
  return j;
}

// ------------------------------------------------------------------ linear

LinearSystem linear_generate(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LinearSystem p;
  p.a = rng.uniform_matrix(n, n, -1.0, 1.0);
  p.a *= 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) p.a(i, i) += 2.0;
  p.b = rng.uniform_vector(n, -1.0, 1.0);
  p.seed = seed;
  return p;
}

ProblemInstance make_instance(const LinearSystem& p) {
  auto shared = std::make_shared<const LinearSystem>(p);
  return ProblemInstance(
      "linear", p.a.rows(), [shared](const Vector& x) { return shared->a * x - shared->b; },
      JacobianFn([shared](const Vector&) { return shared->a; }), 0.0);
}

// ------------------------------------------------------------ log-sum-exp

LogSumExpProblem logsumexp_generate(std::size_t n, std::size_t m, std::uint64_t seed, double gamma) {
  if (n == 0 || m == 0) throw std::invalid_argument("logsumexp_generate: n and m must be positive");
  Rng rng(seed);
  Matrix c_hat = rng.uniform_matrix(n, m, -1.0, 1.0);
  Vector b = rng.uniform_vector(m, -1.0, 1.0);

  // ∇f̂(0) = Σ softmax(−b)_j ĉ_j
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) top = std::max(top, -b[j]);
  Vector w(m);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    w[j] = std::exp(-b[j] - top);
    total += w[j];
  }
  w *= 1.0 / total;
  const Vector grad0 = c_hat * w;

  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) c_hat(i, j) -= grad0[i];
  }
  return LogSumExpProblem{std::move(c_hat), std::move(b), gamma, seed};
}

namespace {

Vector logsumexp_exponents(const LogSumExpProblem& p, const Vector& x) {
  if (x.size() != p.dim()) throw DimensionMismatch("log-sum-exp: x has wrong length");
  Vector z = transpose_times(p.c, x);
  z -= p.b;
  return z;
}

}  // namespace

Vector logsumexp_weights(const LogSumExpProblem& p, const Vector& x) {
  Vector z = logsumexp_exponents(p, x);
  double top = -std::numeric_limits<double>::infinity();
  for (double v : z.values()) top = std::max(top, v);
  double total = 0.0;
  for (double& v : z.values()) {
    v = std::exp(v - top);  // exponent ≤ 0
    total += v;
  }
  z *= 1.0 / total;
  return z;
}

double logsumexp_value(const LogSumExpProblem& p, const Vector& x) {
  const Vector z = logsumexp_exponents(p, x);
  double top = -std::numeric_limits<double>::infinity();
  for (double v : z.values()) top = std::max(top, v);
  double total = 0.0;
  for (double v : z.values()) total += std::exp(v - top);
  const Vector cx = transpose_times(p.c, x);
  const double xx = dot(x, x);
  return top + std::log(total) + 0.5 * dot(cx, cx) + 0.5 * p.gamma * xx;
}

Vector logsumexp_F(const LogSumExpProblem& p, const Vector& x) {
  const Vector pi = logsumexp_weights(p, x);
  Vector coeff = transpose_times(p.c, x);  // c_jᵀx
  coeff += pi;
  Vector grad = p.c * coeff;
  grad += p.gamma * x;
  return grad;
}

Matrix logsumexp_J(const LogSumExpProblem& p, const Vector& x) {
  const std::size_t n = p.dim();
  const std::size_t m = p.terms();
  const Vector pi = logsumexp_weights(p, x);
  const Vector g = p.c * pi;
  Matrix h(n, n);
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t row = 0; row <= col; ++row) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += (pi[j] + 1.0) * p.c(row, j) * p.c(col, j);
      s -= g[row] * g[col];
      if (row == col) s += p.gamma;
      h(row, col) = s;
      h(col, row) = s;
    }
  }
  return h;
}

ProblemInstance make_instance(const LogSumExpProblem& p) {
  auto shared = std::make_shared<const LogSumExpProblem>(p);
  return ProblemInstance(
      "logsumexp", p.dim(), [shared](const Vector& x) { return logsumexp_F(*shared, x); },
      JacobianFn([shared](const Vector& x) { return logsumexp_J(*shared, x); }));
}

// ------------------------------------------------------------ H-equation

Vector ChandrasekharProblem::nodes() const {
  Vector mu(n);
  for (std::size_t i = 0; i < n; ++i) mu[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  return mu;
}

namespace {

Vector chandrasekhar_brackets(const ChandrasekharProblem& p, const Vector& mu, const Vector& x) {
  if (x.size() != p.n) throw DimensionMismatch("chandrasekhar: x has wrong length");
  const double scale = p.c / (2.0 * static_cast<double>(p.n));
  Vector bracket(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.n; ++j) s += mu[i] * x[j] / (mu[i] + mu[j]);
    bracket[i] = 1.0 - scale * s;
    if (!(std::abs(bracket[i]) >= 1e-14)) {
      throw PoleEncountered("chandrasekhar: bracket " + std::to_string(i) + " is " + std::to_string(bracket[i]));
    }
  }
  return bracket;
}

}  // namespace

Vector chandrasekhar_F(const ChandrasekharProblem& p, const Vector& x) {
  const Vector mu = p.nodes();
  const Vector bracket = chandrasekhar_brackets(p, mu, x);
  Vector f(p.n);
  for (std::size_t i = 0; i < p.n; ++i) f[i] = x[i] - 1.0 / bracket[i];
  return f;
}

Matrix chandrasekhar_J(const ChandrasekharProblem& p, const Vector& x) {
  const Vector mu = p.nodes();
  const Vector bracket = chandrasekhar_brackets(p, mu, x);
  const double scale = p.c / (2.0 * static_cast<double>(p.n));
  Matrix j(p.n, p.n);
  for (std::size_t k = 0; k < p.n; ++k) {
    for (std::size_t i = 0; i < p.n; ++i) {
      j(i, k) = (i == k ? 1.0 : 0.0) - scale * mu[i] / (mu[i] + mu[k]) / (bracket[i] * bracket[i]);
    }
  }
  return j;
}

ProblemInstance make_instance(const ChandrasekharProblem& p) {
  return ProblemInstance(
      "chandrasekhar", p.n, [p](const Vector& x) { return chandrasekhar_F(p, x); },
      JacobianFn([p](const Vector& x) { return chandrasekhar_J(p, x); }));
}

// ----------------------------------------------------------------- utilities

Matrix finite_difference_jacobian(const ResidualFn& f, const Vector& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_jacobian: h must be positive");
  const std::size_t n = x.size();
  std::vector<double> data;
  std::size_t rows = 0;
  for (std::size_t j = 0; j < n; ++j) {
    Vector plus = x;
    Vector minus = x;
    plus[j] += h;
    minus[j] -= h;
    Vector col = f(plus) - f(minus);
    col *= 1.0 / (2.0 * h);
    rows = col.size();
    data.insert(data.end(), col.values().begin(), col.values().end());
  }
  return Matrix(rows, n, std::move(data));
}

double estimate_lipschitz_M(const ProblemInstance& p, const Vector& x_star, double radius, int samples,
                            std::uint64_t seed) {
  if (!(radius > 0.0)) throw std::invalid_argument("estimate_lipschitz_M: radius must be positive");
  const Matrix j_star = p.jacobian(x_star);
  Rng rng(seed);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vector offset = rng.ball(p.dim(), radius);
    const double dist = norm2(offset);
    if (dist == 0.0) continue;
    try {
      const Matrix diff = p.jacobian(x_star + offset) - j_star;
      worst = std::max(worst, spectral_norm(diff) / dist);
    } catch (const PoleEncountered&) {
      // outside the domain of F; not a point of the ball that matters
    }
  }
  return 1.5 * worst;
}

// ------------------------------------------------------------ serialization

namespace {

nlohmann::json to_array(std::span<const double> values) { return nlohmann::json(std::vector<double>(values.begin(), values.end())); }

Vector vector_from(const nlohmann::json& j) { return Vector(j.get<std::vector<double>>()); }

Matrix matrix_from(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, j.get<std::vector<double>>());
}

}  // namespace

ProblemInstance make_instance(const ProblemSpec& spec) {
  return std::visit([](const auto& p) { return make_instance(p); }, spec);
}

std::string problem_kind(const ProblemSpec& spec) {
  struct Kind {
    std::string operator()(const LinearSystem&) const { return "linear"; }
    std::string operator()(const LogSumExpProblem&) const { return "logsumexp"; }
    std::string operator()(const ChandrasekharProblem&) const { return "chandrasekhar"; }
  };
  return std::visit(Kind{}, spec);
}

nlohmann::json problem_to_json(const ProblemSpec& spec) {
  nlohmann::json doc;
  struct Payload {
    nlohmann::json& doc;
    void operator()(const LinearSystem& p) const {
      doc["dim"] = p.a.rows();
      doc["seed"] = p.seed;
      doc["payload"] = {{"a", to_array(p.a.column_major())}, {"b", to_array(p.b.values())}};
    }
    void operator()(const LogSumExpProblem& p) const {
      doc["dim"] = p.dim();
      doc["seed"] = p.seed;
      doc["payload"] = {{"m", p.terms()},
                        {"gamma", p.gamma},
                        {"c", to_array(p.c.column_major())},
                        {"b", to_array(p.b.values())}};
    }
    void operator()(const ChandrasekharProblem& p) const {
      doc["dim"] = p.n;
      doc["seed"] = 0;
      doc["payload"] = {{"c", p.c}};
    }
  };
  doc["kind"] = problem_kind(spec);
  std::visit(Payload{doc}, spec);
  return doc;
}

ProblemSpec problem_from_json(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  const auto dim = doc.at("dim").get<std::size_t>();
  const auto seed = doc.value("seed", std::uint64_t{0});
  const auto& payload = doc.at("payload");
  if (kind == "linear") {
    return LinearSystem{matrix_from(payload.at("a"), dim, dim), vector_from(payload.at("b")), seed};
  }
  if (kind == "logsumexp") {
    const auto m = payload.at("m").get<std::size_t>();
    return LogSumExpProblem{matrix_from(payload.at("c"), dim, m), vector_from(payload.at("b")),
                            payload.at("gamma").get<double>(), seed};
  }
  if (kind == "chandrasekhar") {
    return ChandrasekharProblem{payload.at("c").get<double>(), dim};
  }
  throw std::invalid_argument("problem_from_json: unknown kind '" + kind + "'");
}

}  // namespace broyden

#pragma once

// Independent reference computations for the tests. Dense kernels come from
// Eigen; the problem formulas are re-derived with plain loops.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "broyden/linalg.hpp"
#include "broyden/problems.hpp"

namespace oracle {

inline Eigen::MatrixXd to_eigen(const broyden::Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) {
    for (std::size_t i = 0; i < m.rows(); ++i) out(i, j) = m(i, j);
  }
  return out;
}

inline broyden::Matrix from_eigen(const Eigen::MatrixXd& m) {
  broyden::Matrix out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = m(i, j);
  }
  return out;
}

inline double spectral_norm(const broyden::Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  return svd.singularValues()(0);
}

inline broyden::Matrix inverse(const broyden::Matrix& m) { return from_eigen(to_eigen(m).fullPivLu().inverse()); }

/// Largest 2×2 minor magnitude of D; zero for rank ≤ 1.
inline double max_minor(const broyden::Matrix& d) {
  double worst = 0.0;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (std::size_t k = i + 1; k < d.rows(); ++k) {
      for (std::size_t j = 0; j < d.cols(); ++j) {
        for (std::size_t l = j + 1; l < d.cols(); ++l) {
          worst = std::max(worst, std::abs(d(i, j) * d(k, l) - d(i, l) * d(k, j)));
        }
      }
    }
  }
  return worst;
}

/// Plain softmax without the max shift; fine for the small arguments used here.
inline double logsumexp_value(const broyden::LogSumExpProblem& p, const std::vector<double>& x) {
  double sum_exp = 0.0;
  double quad = 0.0;
  for (std::size_t j = 0; j < p.terms(); ++j) {
    double cx = 0.0;
    for (std::size_t i = 0; i < p.dim(); ++i) cx += p.c(i, j) * x[i];
    sum_exp += std::exp(cx - p.b[j]);
    quad += cx * cx;
  }
  double xx = 0.0;
  for (double v : x) xx += v * v;
  return std::log(sum_exp) + 0.5 * quad + 0.5 * p.gamma * xx;
}

/// Central differences of the scalar objective.
inline std::vector<double> logsumexp_gradient_fd(const broyden::LogSumExpProblem& p, std::vector<double> x,
                                                 double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = logsumexp_value(p, x);
    x[i] = xi - h;
    const double fm = logsumexp_value(p, x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Entry-by-entry H-equation residual.
inline std::vector<double> chandrasekhar_F(double c, std::size_t n, const std::vector<double>& x) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu_i = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double mu_j = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
      s += mu_i * x[j] / (mu_i + mu_j);
    }
    out[i] = x[i] - 1.0 / (1.0 - c / (2.0 * static_cast<double>(n)) * s);
  }
  return out;
}

inline broyden::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                                     double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  broyden::Matrix m(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = dist(gen);
  }
  return m;
}

inline broyden::Vector random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  broyden::Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = dist(gen);
  return v;
}

/// Random matrix shifted to be comfortably nonsingular.
inline broyden::Matrix well_conditioned(std::size_t n, std::uint64_t seed, double shift = 3.0) {
  broyden::Matrix m = random_matrix(n, n, seed);
  for (std::size_t i = 0; i < n; ++i) m(i, i) += shift;
  return m;
}

inline double max_abs_diff(const broyden::Matrix& a, const broyden::Matrix& b) {
  double worst = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    for (std::size_t i = 0; i < a.rows(); ++i) worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
  }
  return worst;
}

}  // namespace oracle

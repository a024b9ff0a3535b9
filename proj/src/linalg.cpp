#include "broyden/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>

namespace broyden {
namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatch(std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

bool finite_range(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// Power iteration for the dominant eigenvalue of AᵀA from a given start.
// Returns nullopt when the iteration budget is exhausted.
std::optional<double> power_iteration(const Matrix& a, Vector v, const SpectralNormOptions& options) {
  v *= 1.0 / norm2(v);
  double estimate = 0.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Vector av = a * v;
    const double next = dot(av, av);  // Rayleigh quotient of AᵀA at unit v
    Vector w = transpose_times(a, av);
    const double wn = norm2(w);
    if (wn == 0.0) return 0.0;
    if (std::abs(next - estimate) <= options.relative_tolerance * next) {
      return next;
    }
    estimate = next;
    v = (1.0 / wn) * std::move(w);
  }
  return std::nullopt;
}

// One-sided Jacobi: orthogonalizes the columns of A by plane rotations; the
// column norms are then the singular values. Returns the largest squared one.
double jacobi_max_singular_squared(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  std::vector<double> u(a.column_major().begin(), a.column_major().end());
  const double tol = static_cast<double>(m) * std::numeric_limits<double>::epsilon();
  auto col = [&](std::size_t j) { return u.data() + j * m; };
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        const double* cp = col(p);
        const double* cq = col(q);
        for (std::size_t i = 0; i < m; ++i) {
          alpha += cp[i] * cp[i];
          beta += cq[i] * cq[i];
          gamma += cp[i] * cq[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        double* wp = col(p);
        double* wq = col(q);
        for (std::size_t i = 0; i < m; ++i) {
          const double x = wp[i];
          const double y = wq[i];
          wp[i] = c * x - s * y;
          wq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) {
      double best = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double sq = 0.0;
        for (std::size_t i = 0; i < m; ++i) sq += col(j)[i] * col(j)[i];
        best = std::max(best, sq);
      }
      return best;
    }
  }
  throw ConvergenceFailure("spectral_norm: Jacobi sweeps did not converge in " + std::to_string(kMaxSweeps) +
                           " sweeps");
}

}  // namespace

// ---------------------------------------------------------------- Vector

Vector::Vector(std::vector<double> values) : data_(std::move(values)) {
  if (!all_finite()) throw NonFiniteValue("Vector: non-finite entry");
}

Vector::Vector(std::initializer_list<double> values) : Vector(std::vector<double>(values)) {}

Vector Vector::constant(std::size_t n, double value) {
  Vector v(n);
  std::fill(v.data_.begin(), v.data_.end(), value);
  return v;
}

Vector Vector::unit(std::size_t n, std::size_t i) {
  Vector v(n);
  v[i] = 1.0;
  return v;
}

bool Vector::all_finite() const noexcept { return finite_range(data_); }

Vector& Vector::operator+=(const Vector& rhs) {
  require_same_size(size(), rhs.size(), "Vector +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Vector& Vector::operator-=(const Vector& rhs) {
  require_same_size(size(), rhs.size(), "Vector -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Vector& Vector::operator*=(double alpha) {
  for (double& v : data_) v *= alpha;
  return *this;
}

Vector operator+(Vector lhs, const Vector& rhs) { return lhs += rhs; }
Vector operator-(Vector lhs, const Vector& rhs) { return lhs -= rhs; }
Vector operator-(Vector v) { return v *= -1.0; }
Vector operator*(double alpha, Vector v) { return v *= alpha; }

double dot(const Vector& a, const Vector& b) {
  require_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Vector& v) {
  // Scaled accumulation keeps tiny and huge iterates representable.
  double scale = 0.0;
  for (double x : v.values()) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double s = 0.0;
  for (double x : v.values()) {
    const double t = x / scale;
    s += t * t;
  }
  return scale * std::sqrt(s);
}

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> column_major)
    : rows_(rows), cols_(cols), data_(std::move(column_major)) {
  require_same_size(data_.size(), rows * cols, "Matrix data");
  if (!all_finite()) throw NonFiniteValue("Matrix: non-finite entry");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    require_same_size(row.size(), c, "Matrix::from_rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  if (!m.all_finite()) throw NonFiniteValue("Matrix: non-finite entry");
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(const Vector& d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::outer(const Vector& u, const Vector& v) {
  Matrix m(u.size(), v.size());
  for (std::size_t j = 0; j < v.size(); ++j) {
    for (std::size_t i = 0; i < u.size(); ++i) m(i, j) = u[i] * v[j];
  }
  return m;
}

Vector Matrix::column_vector(std::size_t j) const {
  const auto c = column(j);
  Vector v(rows_);
  std::copy(c.begin(), c.end(), v.values().begin());
  return v;
}

bool Matrix::all_finite() const noexcept { return finite_range(data_); }

double Matrix::max_abs() const noexcept {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t j = 0; j < cols_; ++j) {
    for (std::size_t i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
  }
  return t;
}

Matrix& Matrix::operator+=(const Matrix& rhs) {
  require_same_size(rows_, rhs.rows_, "Matrix += rows");
  require_same_size(cols_, rhs.cols_, "Matrix += cols");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& rhs) {
  require_same_size(rows_, rhs.rows_, "Matrix -= rows");
  require_same_size(cols_, rhs.cols_, "Matrix -= cols");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double alpha) {
  for (double& v : data_) v *= alpha;
  return *this;
}

Matrix operator+(Matrix lhs, const Matrix& rhs) { return lhs += rhs; }
Matrix operator-(Matrix lhs, const Matrix& rhs) { return lhs -= rhs; }
Matrix operator*(double alpha, Matrix m) { return m *= alpha; }

Matrix operator*(const Matrix& a, const Matrix& b) {
  require_same_size(a.cols(), b.rows(), "Matrix product");
  Matrix c(a.rows(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double bkj = b(k, j);
      if (bkj == 0.0) continue;
      for (std::size_t i = 0; i < a.rows(); ++i) c(i, j) += a(i, k) * bkj;
    }
  }
  return c;
}

Vector operator*(const Matrix& a, const Vector& x) {
  require_same_size(a.cols(), x.size(), "Matrix-vector product");
  Vector y(a.rows());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    const double xj = x[j];
    const auto col = a.column(j);
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] += col[i] * xj;
  }
  return y;
}

Vector transpose_times(const Matrix& a, const Vector& x) {
  require_same_size(a.rows(), x.size(), "transpose_times");
  Vector y(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    const auto col = a.column(j);
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += col[i] * x[i];
    y[j] = s;
  }
  return y;
}

// ---------------------------------------------------------------- LU

LuFactorization lu_factor(const Matrix& a) {
  if (!a.square()) {
    throw DimensionMismatch("lu_factor: matrix is " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()));
  }
  if (!a.all_finite()) throw NonFiniteValue("lu_factor: non-finite entry");

  const std::size_t n = a.rows();
  LuFactorization f;
  f.n_ = n;
  f.packed_ = a;
  f.perm_.resize(n);
  std::iota(f.perm_.begin(), f.perm_.end(), std::size_t{0});
  f.sign_ = 1;

  const double threshold = kPivotTolerance * a.max_abs();
  Matrix& lu = f.packed_;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu(i, k)) > best) {
        best = std::abs(lu(i, k));
        p = i;
      }
    }
    if (best == 0.0 || best < threshold) {
      throw SingularMatrix("lu_factor: pivot " + std::to_string(best) + " at column " +
                           std::to_string(k) + " below threshold");
    }
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(p, j));
      std::swap(f.perm_[k], f.perm_[p]);
      f.sign_ = -f.sign_;
    }
    const double pivot = lu(k, k);
    for (std::size_t i = k + 1; i < n; ++i) lu(i, k) /= pivot;
    for (std::size_t j = k + 1; j < n; ++j) {
      const double ukj = lu(k, j);
      if (ukj == 0.0) continue;
      for (std::size_t i = k + 1; i < n; ++i) lu(i, j) -= lu(i, k) * ukj;
    }
  }
  return f;
}

Matrix LuFactorization::lower() const {
  Matrix l = Matrix::identity(n_);
  for (std::size_t j = 0; j < n_; ++j) {
    for (std::size_t i = j + 1; i < n_; ++i) l(i, j) = packed_(i, j);
  }
  return l;
}

Matrix LuFactorization::upper() const {
  Matrix u(n_, n_);
  for (std::size_t j = 0; j < n_; ++j) {
    for (std::size_t i = 0; i <= j; ++i) u(i, j) = packed_(i, j);
  }
  return u;
}

Vector LuFactorization::solve(const Vector& b) const {
  require_same_size(b.size(), n_, "lu_solve");
  Vector z(n_);
  for (std::size_t i = 0; i < n_; ++i) z[i] = b[perm_[i]];
  // Forward substitution with unit lower factor.
  for (std::size_t j = 0; j < n_; ++j) {
    const double zj = z[j];
    if (zj == 0.0) continue;
    for (std::size_t i = j + 1; i < n_; ++i) z[i] -= packed_(i, j) * zj;
  }
  // Back substitution, column oriented.
  for (std::size_t jj = n_; jj-- > 0;) {
    z[jj] /= packed_(jj, jj);
    const double zj = z[jj];
    if (zj == 0.0) continue;
    for (std::size_t i = 0; i < jj; ++i) z[i] -= packed_(i, jj) * zj;
  }
  return z;
}

Matrix LuFactorization::solve(const Matrix& b) const {
  require_same_size(b.rows(), n_, "lu_solve (matrix)");
  std::vector<double> out;
  out.reserve(b.rows() * b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    const Vector x = solve(b.column_vector(j));
    out.insert(out.end(), x.values().begin(), x.values().end());
  }
  return Matrix(b.rows(), b.cols(), std::move(out));
}

Matrix LuFactorization::inverse() const { return solve(Matrix::identity(n_)); }

Vector lu_solve(const LuFactorization& f, const Vector& b) { return f.solve(b); }

Matrix inverse(const Matrix& a) { return lu_factor(a).inverse(); }

// ---------------------------------------------------------------- norms

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.column_major()) s += v * v;
  return std::sqrt(s);
}

double spectral_norm(const Matrix& a, const SpectralNormOptions& options) {
  if (!a.all_finite()) throw NonFiniteValue("spectral_norm: non-finite entry");
  if (a.rows() == 0 || a.cols() == 0 || a.max_abs() == 0.0) return 0.0;
  const std::size_t n = a.cols();
  const auto first = power_iteration(a, Vector::constant(n, 1.0), options);
  Vector alt(n);
  for (std::size_t i = 0; i < n; ++i) alt[i] = std::cos(1.0 + 0.754877666 * static_cast<double>(i * i + i));
  const auto second = first ? power_iteration(a, std::move(alt), options) : std::nullopt;
  if (!first || !second) return std::sqrt(jacobi_max_singular_squared(a));
  return std::sqrt(std::max(*first, *second));
}

// ---------------------------------------------------------------- updates

Matrix rank_one_update(const Matrix& b, const Vector& u, const Vector& v) {
  require_same_size(b.rows(), u.size(), "rank_one_update rows");
  require_same_size(b.cols(), v.size(), "rank_one_update cols");
  Matrix out = b;
  for (std::size_t j = 0; j < b.cols(); ++j) {
    const double vj = v[j];
    if (vj == 0.0) continue;
    for (std::size_t i = 0; i < b.rows(); ++i) out(i, j) += u[i] * vj;
  }
  return out;
}

Matrix sherman_morrison_inverse_update(const Matrix& h, const Vector& u, const Vector& y) {
  require_same_size(h.rows(), u.size(), "sherman_morrison rows");
  require_same_size(h.cols(), y.size(), "sherman_morrison cols");
  const Vector hy = h * y;
  const double den = dot(u, hy);
  if (!(std::abs(den) >= 1e-14 * norm2(u) * norm2(hy)) || den == 0.0) {
    throw BreakdownDenominator("sherman_morrison_inverse_update: u'Hy vanished", den);
  }
  const Vector uth = transpose_times(h, u);  // (uᵀH)ᵀ
  return rank_one_update(h, (-1.0 / den) * (hy - u), uth);
}

double condition_number(const Matrix& a) { return spectral_norm(a) * spectral_norm(inverse(a)); }

}  // namespace broyden

#pragma once

// Dense column-major linear algebra used by the solvers and diagnostics.
//
// Everything here is a value type. Operations never mutate their inputs;
// the few in-place helpers are member operators on the left operand.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace broyden {

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteValue : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConvergenceFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the Sherman-Morrison denominator u'Hy vanishes.
class BreakdownDenominator : public std::runtime_error {
 public:
  BreakdownDenominator(const std::string& what, double denominator)
      : std::runtime_error(what), denominator_(denominator) {}
  double denominator() const noexcept { return denominator_; }

 private:
  double denominator_;
};

class Vector {
 public:
  Vector() = default;
  /// Zero vector of length n.
  explicit Vector(std::size_t n) : data_(n, 0.0) {}
  /// Takes ownership of `values`; throws NonFiniteValue on NaN/Inf.
  explicit Vector(std::vector<double> values);
  Vector(std::initializer_list<double> values);

  static Vector constant(std::size_t n, double value);
  static Vector unit(std::size_t n, std::size_t i);

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& std_vector() const noexcept { return data_; }

  bool all_finite() const noexcept;

  Vector& operator+=(const Vector& rhs);
  Vector& operator-=(const Vector& rhs);
  Vector& operator*=(double alpha);

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

Vector operator+(Vector lhs, const Vector& rhs);
Vector operator-(Vector lhs, const Vector& rhs);
Vector operator-(Vector v);
Vector operator*(double alpha, Vector v);

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& v);

class Matrix {
 public:
  Matrix() = default;
  /// Zero matrix.
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  /// Column-major data; throws NonFiniteValue on NaN/Inf.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> column_major);

  /// Row-wise literal, e.g. Matrix::from_rows({{1, 2}, {3, 4}}).
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix diagonal(const Vector& d);
  static Matrix outer(const Vector& u, const Vector& v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<const double> column_major() const noexcept { return data_; }
  std::span<const double> column(std::size_t j) const {
    return std::span<const double>(data_).subspan(j * rows_, rows_);
  }
  Vector column_vector(std::size_t j) const;

  bool all_finite() const noexcept;
  double max_abs() const noexcept;

  Matrix transposed() const;

  Matrix& operator+=(const Matrix& rhs);
  Matrix& operator-=(const Matrix& rhs);
  Matrix& operator*=(double alpha);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix lhs, const Matrix& rhs);
Matrix operator-(Matrix lhs, const Matrix& rhs);
Matrix operator*(double alpha, Matrix m);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, const Vector& x);
/// Aᵀx without forming the transpose.
Vector transpose_times(const Matrix& a, const Vector& x);

/// PA = LU with partial pivoting.
class LuFactorization {
 public:
  std::size_t size() const noexcept { return n_; }
  /// +1 or -1 depending on the parity of the row permutation.
  int permutation_sign() const noexcept { return sign_; }
  /// perm[i] is the row of A that ended up in row i of PA.
  const std::vector<std::size_t>& permutation() const noexcept { return perm_; }
  /// Unit lower factor L (diagonal ones implied in the packed storage).
  Matrix lower() const;
  Matrix upper() const;

  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  Matrix inverse() const;

 private:
  friend LuFactorization lu_factor(const Matrix& a);
  std::size_t n_ = 0;
  Matrix packed_;
  std::vector<std::size_t> perm_;
  int sign_ = 1;
};

/// Relative pivot threshold: a pivot below this times max|A| is singular.
inline constexpr double kPivotTolerance = 1e-14;

/// Throws SingularMatrix when a pivot falls below kPivotTolerance * max|A|.
LuFactorization lu_factor(const Matrix& a);
Vector lu_solve(const LuFactorization& f, const Vector& b);
Matrix inverse(const Matrix& a);

double frobenius_norm(const Matrix& a);

struct SpectralNormOptions {
  double relative_tolerance = 1e-12;
  int max_iterations = 10000;
};

/// Largest singular value via power iteration on AᵀA.
///
/// Starts from the normalized ones vector, then repeats from a second fixed
/// vector and keeps the larger estimate so that a start orthogonal to the
/// dominant singular vector cannot hide it. When either run exhausts its
/// budget (nearly equal leading singular values) the value comes from
/// one-sided Jacobi SVD instead. Throws ConvergenceFailure only if that
/// also fails to converge.
double spectral_norm(const Matrix& a, const SpectralNormOptions& options = {});

/// B + u vᵀ.
Matrix rank_one_update(const Matrix& b, const Vector& u, const Vector& v);

/// Inverse of the good-Broyden update of B = H⁻¹ along step u with change y:
///
///   H⁺ = H − (H y − u) uᵀH / (uᵀ H y).
///
/// Throws BreakdownDenominator when |uᵀHy| < 1e-14 ‖u‖ ‖Hy‖.
Matrix sherman_morrison_inverse_update(const Matrix& h, const Vector& u, const Vector& y);

/// ‖A‖ ‖A⁻¹‖ in the spectral norm. Throws SingularMatrix.
double condition_number(const Matrix& a);

}  // namespace broyden

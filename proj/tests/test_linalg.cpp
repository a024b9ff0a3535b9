#include <cmath>

#include "broyden/linalg.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace broyden;

TEST_SUITE("linalg") {
  TEST_CASE("vector and matrix construction reject non-finite entries") {
    CHECK_THROWS_AS(Vector({1.0, NAN}), NonFiniteValue);
    CHECK_THROWS_AS(Matrix(1, 1, {INFINITY}), NonFiniteValue);
  CHECK_THROWS_AS((Vector{1.0} + Vector{1.0, 2.0}), DimensionMismatch);
    const Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(m(0, 1) == 2.0);
    CHECK(m.column_major()[1] == 3.0);  // column-major storage
  }

  TEST_CASE("lu_factor on the identity is trivial") {
    const auto f = lu_factor(Matrix::identity(3));
    CHECK(f.lower() == Matrix::identity(3));
    CHECK(f.upper() == Matrix::identity(3));
    CHECK(f.permutation_sign() == 1);
    CHECK(f.permutation() == std::vector<std::size_t>{0, 1, 2});
  }

  TEST_CASE("lu_factor swaps rows of a permutation matrix") {
    const auto f = lu_factor(Matrix::from_rows({{0, 1}, {1, 0}}));
    CHECK(f.permutation_sign() == -1);
    const Vector z = lu_solve(f, Vector{1, 2});
    CHECK(z[0] == doctest::Approx(2.0));
    CHECK(z[1] == doctest::Approx(1.0));
  }

  TEST_CASE("lu_solve on a seeded random 8x8 has a small residual") {
    const Matrix a = oracle::random_matrix(8, 8, 11);
    const Vector b = Vector::constant(8, 1.0);
    const Vector z = lu_solve(lu_factor(a), b);
    CHECK(norm2(a * z - b) <= 1e-10 * norm2(b));
  }

  TEST_CASE("lu_solve examples") {
    CHECK(lu_solve(lu_factor(Matrix::identity(3)), Vector{1, 2, 3}) == Vector{1, 2, 3});
    Matrix two = Matrix::identity(3);
    two *= 2.0;
    const Vector z = lu_solve(lu_factor(two), Vector{2, 4, 6});
    CHECK(z == Vector{1, 2, 3});
    const Matrix a = Matrix::from_rows({{4, 1}, {1, 3}});
    const Vector w = lu_solve(lu_factor(a), Vector{1, 2});
    CHECK(norm2(a * w - Vector{1, 2}) <= 1e-14);
    CHECK_THROWS_AS(lu_solve(lu_factor(a), Vector{1, 2, 3}), DimensionMismatch);
  }

  TEST_CASE("lu_factor reports singular and non-square inputs") {
    CHECK_THROWS_AS(lu_factor(Matrix::from_rows({{1, 2}, {2, 4}})), SingularMatrix);
    CHECK_THROWS_AS(lu_factor(Matrix(2, 2)), SingularMatrix);
    CHECK_THROWS_AS(lu_factor(Matrix(2, 3)), DimensionMismatch);
  }

  TEST_CASE("LU reconstructs PA and the inverse") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const std::size_t n = 2 + seed;
      const Matrix a = oracle::well_conditioned(n, seed);
      const auto f = lu_factor(a);
      Matrix pa(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) pa(i, j) = a(f.permutation()[i], j);
      }
      CHECK(oracle::max_abs_diff(f.lower() * f.upper(), pa) <= 1e-12);
      const Matrix inv = f.inverse();
      const Matrix expect = oracle::inverse(a);
      CHECK(frobenius_norm(inv - expect) <= 1e-10 * frobenius_norm(expect));
    }
  }

  TEST_CASE("residual bound for conditioned systems") {
    for (std::uint64_t seed = 20; seed < 40; ++seed) {
      const std::size_t n = 2 + seed % 15;
      const Matrix a = oracle::random_matrix(n, n, seed);
      if (oracle::to_eigen(a).jacobiSvd().singularValues().tail(1)(0) < 1e-8 * oracle::spectral_norm(a)) continue;
      const Vector b = oracle::random_vector(n, seed + 1000);
      const Vector z = lu_solve(lu_factor(a), b);
      CHECK(norm2(a * z - b) <= 1e-9 * spectral_norm(a) * norm2(b));
    }
  }

  TEST_CASE("frobenius_norm examples") {
    CHECK(frobenius_norm(Matrix::identity(3)) == doctest::Approx(std::sqrt(3.0)));
    CHECK(frobenius_norm(Matrix(4, 4)) == 0.0);
    CHECK(frobenius_norm(Matrix::from_rows({{1, 2}, {3, 4}})) == doctest::Approx(std::sqrt(30.0)));
  }

  TEST_CASE("spectral_norm examples") {
    CHECK(spectral_norm(Matrix::diagonal(Vector{1, 3, 2})) == doctest::Approx(3.0).epsilon(1e-12));
    Vector u{2, 0, 0};
    Vector v{0, 3, 4};
    CHECK(spectral_norm(Matrix::outer(u, v)) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(spectral_norm(Matrix(3, 3)) == 0.0);
    // ones-vector start is orthogonal to the dominant direction here
    CHECK(spectral_norm(Matrix::from_rows({{3, -3}, {0, 0}})) == doctest::Approx(std::sqrt(18.0)).epsilon(1e-12));
  }

  TEST_CASE("spectral_norm matches SVD and multi-start power iteration on random 6x6") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
      const Matrix a = oracle::random_matrix(6, 6, seed);
      const double expect = oracle::spectral_norm(a);
      CHECK(std::abs(spectral_norm(a) - expect) <= 1e-10 * expect);

      // brute force: 50 random starts, run to 1e-14
      double best = 0.0;
      for (int start = 0; start < 50; ++start) {
        Vector x = oracle::random_vector(6, seed * 1000 + start);
        x *= 1.0 / norm2(x);
        double est = 0.0;
        for (int it = 0; it < 20000; ++it) {
          Vector w = transpose_times(a, a * x);
          const double next = std::sqrt(norm2(w));
          const double wn = norm2(w);
          x = (1.0 / wn) * w;
          if (std::abs(next - est) <= 1e-14 * next) break;
          est = next;
        }
        best = std::max(best, norm2(a * x));
      }
      CHECK(std::abs(spectral_norm(a) - best) <= 1e-9 * best);
    }
  }

  TEST_CASE("norm equivalence on random matrices") {
    for (std::uint64_t seed = 200; seed < 230; ++seed) {
      const std::size_t n = 1 + seed % 12;
      const Matrix a = oracle::random_matrix(n, n, seed);
      const double fro = frobenius_norm(a);
      const double spec = spectral_norm(a);
      CHECK(fro >= spec * (1.0 - 1e-12));
      CHECK(spec >= fro / std::sqrt(static_cast<double>(n)) * (1.0 - 1e-12));
    }
  }

  TEST_CASE("rank_one_update examples and rank property") {
    Matrix e = rank_one_update(Matrix(3, 3), Vector::unit(3, 0), Vector::unit(3, 1));
    CHECK(e(0, 1) == 1.0);
    CHECK(frobenius_norm(e) == 1.0);
    CHECK(rank_one_update(Matrix::identity(3), Vector(3), Vector{1, 2, 3}) == Matrix::identity(3));

    const Matrix b = oracle::random_matrix(5, 5, 7);
    const Vector u = oracle::random_vector(5, 8);
    const Vector v = oracle::random_vector(5, 9);
    const Matrix out = rank_one_update(b, u, v);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) CHECK(out(i, j) == b(i, j) + u[i] * v[j]);
    }
    CHECK(oracle::max_minor(out - b) <= 1e-12);
    CHECK_THROWS_AS(rank_one_update(b, Vector(4), v), DimensionMismatch);
  }

  TEST_CASE("sherman_morrison: secant already satisfied leaves H unchanged") {
    const Matrix h = Matrix::identity(3);
    const Vector u{1, -2, 0.5};
    CHECK(oracle::max_abs_diff(sherman_morrison_inverse_update(h, u, u), h) <= 1e-15);
  }

  TEST_CASE("sherman_morrison: H = I, u = e1, y = 2 e1") {
    const Matrix out = sherman_morrison_inverse_update(Matrix::identity(2), Vector{1, 0}, Vector{2, 0});
    // B+ = I + (2e1 − e1)e1ᵀ = diag(2, 1)
    CHECK(out(0, 0) == doctest::Approx(0.5));
    CHECK(out(1, 1) == doctest::Approx(1.0));
    CHECK(out(0, 1) == 0.0);
    CHECK(out(1, 0) == 0.0);
  }

  TEST_CASE("sherman_morrison matches the direct inverse of the updated B") {
    for (std::uint64_t seed = 300; seed < 340; ++seed) {
      const std::size_t n = 2 + seed % 19;
      const Matrix b = oracle::well_conditioned(n, seed);
      const Matrix h = oracle::inverse(b);
      const Vector u = oracle::random_vector(n, seed + 1);
      const Vector y = b * u + 0.3 * oracle::random_vector(n, seed + 2);
      Vector r = y - b * u;
      r *= 1.0 / dot(u, u);
      const Matrix b_next = rank_one_update(b, r, u);
      const Matrix expect = oracle::inverse(b_next);
      const Matrix got = sherman_morrison_inverse_update(h, u, y);
      CHECK(frobenius_norm(got - expect) <= 1e-9 * frobenius_norm(expect));
      CHECK(frobenius_norm(got * b_next - Matrix::identity(n)) <= 1e-8);
    }
  }

  TEST_CASE("sherman_morrison throws on a vanishing denominator") {
    // uᵀHy = 0 with H = I, u ⟂ y
    CHECK_THROWS_AS(sherman_morrison_inverse_update(Matrix::identity(2), Vector{1, 0}, Vector{0, 1}),
                    BreakdownDenominator);
  }

  TEST_CASE("condition_number examples") {
    CHECK(condition_number(Matrix::identity(4)) == doctest::Approx(1.0));
    CHECK(condition_number(Matrix::diagonal(Vector{1, 10})) == doctest::Approx(10.0));
    CHECK_THROWS_AS(condition_number(Matrix::from_rows({{1, 1}, {1, 1}})), SingularMatrix);
  }

  TEST_CASE("condition_number of random SPD matrices matches an eigensolve") {
    for (std::uint64_t seed = 400; seed < 410; ++seed) {
      const Matrix g = oracle::random_matrix(5, 5, seed);
      Matrix spd = g.transposed() * g;
      for (std::size_t i = 0; i < 5; ++i) spd(i, i) += 0.5;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(oracle::to_eigen(spd));
      const double expect = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
      CHECK(condition_number(spd) == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <complex>
#include <random>

#include "doctest.h"
#include "kinlab/linalg.hpp"

using namespace kinlab;

TEST_CASE("real LU solves a seeded random system") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int n = 40;
  std::vector<double> A(n * n), xref(n), b(n, 0.0);
  for (auto& v : A) v = U(rng);
  for (int i = 0; i < n; ++i) A[i * n + i] += 4.0;
  for (auto& v : xref) v = U(rng);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b[i] += A[i * n + j] * xref[j];
  LuFactors<double> f = lu_factor(A, n, 0);
  lu_solve(f, b);
  for (int i = 0; i < n; ++i) CHECK(b[i] == doctest::Approx(xref[i]).epsilon(1e-10));
}

TEST_CASE("LU result does not depend on thread count") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int n = 60;
  std::vector<double> A(n * n), b1(n), b8;
  for (auto& v : A) v = U(rng);
  for (int i = 0; i < n; ++i) A[i * n + i] += 5.0;
  for (auto& v : b1) v = U(rng);
  b8 = b1;
  LuFactors<double> f1 = lu_factor(A, n, 1);
  LuFactors<double> f8 = lu_factor(A, n, 8);
  lu_solve(f1, b1);
  lu_solve(f8, b8);
  for (int i = 0; i < n; ++i) CHECK(b1[i] == b8[i]);
}

TEST_CASE("complex LU") {
  using C = std::complex<double>;
  int n = 8;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<C> A(n * n), xref(n), b(n, 0.0);
  for (auto& v : A) v = C(U(rng), U(rng));
  for (int i = 0; i < n; ++i) A[i * n + i] += 4.0;
  for (auto& v : xref) v = C(U(rng), U(rng));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b[i] += A[i * n + j] * xref[j];
  LuFactors<C> f = lu_factor(A, n, 0);
  lu_solve(f, b);
  for (int i = 0; i < n; ++i) CHECK(std::abs(b[i] - xref[i]) < 1e-11);
}

TEST_CASE("tridiagonal solve") {
  int n = 50;
  std::vector<double> lo(n, -1.0), di(n, 2.5), up(n, -1.0), x(n), rhs(n, 0.0);
  for (int i = 0; i < n; ++i) x[i] = std::sin(0.3 * i);
  for (int i = 0; i < n; ++i) {
    rhs[i] = di[i] * x[i];
    if (i > 0) rhs[i] += lo[i] * x[i - 1];
    if (i + 1 < n) rhs[i] += up[i] * x[i + 1];
  }
  tridiag_solve(lo, di, up, rhs);
  for (int i = 0; i < n; ++i) CHECK(rhs[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

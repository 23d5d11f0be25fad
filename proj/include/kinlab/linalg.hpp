#pragma once

#include <complex>
#include <vector>

namespace kinlab {

// Dense row-major n x n LU factorization with partial pivoting.
// Row updates below the pivot run in parallel; results do not depend on the
// thread count.
template <class T>
struct LuFactors {
  int n = 0;
  std::vector<T> a;      // packed L\U
  std::vector<int> piv;  // row swaps
};

LuFactors<double> lu_factor(std::vector<double> a, int n, int threads);
LuFactors<std::complex<double>> lu_factor(std::vector<std::complex<double>> a, int n, int threads);

void lu_solve(const LuFactors<double>& f, std::vector<double>& b);
void lu_solve(const LuFactors<std::complex<double>>& f, std::vector<std::complex<double>>& b);

// Tridiagonal solve (Thomas algorithm); diagonals lower/diag/upper of size n
// (lower[0] and upper[n-1] unused). Overwrites rhs with the solution.
void tridiag_solve(std::vector<double> lower, std::vector<double> diag,
                   std::vector<double> upper, std::vector<double>& rhs);
void tridiag_solve(std::vector<std::complex<double>> lower, std::vector<std::complex<double>> diag,
                   std::vector<std::complex<double>> upper, std::vector<std::complex<double>>& rhs);

}  // namespace kinlab

#include "kinlab/linalg.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kinlab {

namespace {

template <class T>
double magnitude(T v) {
  return std::abs(v);
}

template <class T>
LuFactors<T> lu_factor_impl(std::vector<T> a, int n, int threads) {
  if ((int)a.size() != n * n) throw std::invalid_argument("lu_factor: size mismatch");
  LuFactors<T> f;
  f.n = n;
  f.piv.resize(n);
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = magnitude(a[k * (size_t)n + k]);
    for (int i = k + 1; i < n; ++i) {
      double m = magnitude(a[i * (size_t)n + k]);
      if (m > best) {
        best = m;
        p = i;
      }
    }
    if (best == 0.0) throw std::runtime_error("lu_factor: singular matrix");
    f.piv[k] = p;
    if (p != k)
      for (int j = 0; j < n; ++j) std::swap(a[k * (size_t)n + j], a[p * (size_t)n + j]);
    T pivot = a[k * (size_t)n + k];
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads > 0 ? threads : omp_get_max_threads())
#endif
    for (int i = k + 1; i < n; ++i) {
      T* row = &a[i * (size_t)n];
      const T* prow = &a[k * (size_t)n];
      T l = row[k] / pivot;
      row[k] = l;
      for (int j = k + 1; j < n; ++j) row[j] -= l * prow[j];
    }
  }
  f.a = std::move(a);
  return f;
}

template <class T>
void lu_solve_impl(const LuFactors<T>& f, std::vector<T>& b) {
  int n = f.n;
  if ((int)b.size() != n) throw std::invalid_argument("lu_solve: size mismatch");
  for (int k = 0; k < n; ++k)
    if (f.piv[k] != k) std::swap(b[k], b[f.piv[k]]);
  for (int i = 1; i < n; ++i) {
    T s = b[i];
    const T* row = &f.a[i * (size_t)n];
    for (int j = 0; j < i; ++j) s -= row[j] * b[j];
    b[i] = s;
  }
  for (int i = n - 1; i >= 0; --i) {
    T s = b[i];
    const T* row = &f.a[i * (size_t)n];
    for (int j = i + 1; j < n; ++j) s -= row[j] * b[j];
    b[i] = s / row[i];
  }
}

template <class T>
void tridiag_impl(std::vector<T> lower, std::vector<T> diag, std::vector<T> upper,
                  std::vector<T>& rhs) {
  size_t n = diag.size();
  if (lower.size() != n || upper.size() != n || rhs.size() != n)
    throw std::invalid_argument("tridiag_solve: size mismatch");
  for (size_t i = 1; i < n; ++i) {
    T m = lower[i] / diag[i - 1];
    diag[i] -= m * upper[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

}  // namespace

LuFactors<double> lu_factor(std::vector<double> a, int n, int threads) {
  return lu_factor_impl(std::move(a), n, threads);
}
LuFactors<std::complex<double>> lu_factor(std::vector<std::complex<double>> a, int n, int threads) {
  return lu_factor_impl(std::move(a), n, threads);
}
void lu_solve(const LuFactors<double>& f, std::vector<double>& b) { lu_solve_impl(f, b); }
void lu_solve(const LuFactors<std::complex<double>>& f, std::vector<std::complex<double>>& b) {
  lu_solve_impl(f, b);
}
void tridiag_solve(std::vector<double> lower, std::vector<double> diag, std::vector<double> upper,
                   std::vector<double>& rhs) {
  tridiag_impl(std::move(lower), std::move(diag), std::move(upper), rhs);
}
void tridiag_solve(std::vector<std::complex<double>> lower, std::vector<std::complex<double>> diag,
                   std::vector<std::complex<double>> upper, std::vector<std::complex<double>>& rhs) {
  tridiag_impl(std::move(lower), std::move(diag), std::move(upper), rhs);
}

}  // namespace kinlab

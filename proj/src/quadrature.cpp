#include "kinlab/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kinlab {

QuadRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  QuadRule q;
  q.x.resize(n);
  q.w.resize(n);
  // Newton iteration on Legendre polynomials, symmetric pairs.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.x[i] = -x;
    q.x[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    q.w[i] = w;
    q.w[n - 1 - i] = w;
  }
  return q;
}

QuadRule gauss_legendre(int n, double a, double b) {
  QuadRule q = gauss_legendre(n);
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    q.x[i] = mid + half * q.x[i];
    q.w[i] *= half;
  }
  return q;
}

std::vector<double> graded_wall_grid(double L, int n, double ratio, double cap_factor) {
  if (!(L > 0.0) || n < 2) throw std::invalid_argument("graded_wall_grid: bad parameters");
  double cap = cap_factor * L / n;
  // Bisection on the first width so the capped geometric widths sum to L.
  auto total = [&](double h0) {
    double s = 0.0, h = h0;
    for (int k = 0; k < n; ++k) {
      s += std::min(h, cap);
      h *= ratio;
    }
    return s;
  };
  double lo = 0.0, hi = cap;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (total(mid) < L ? lo : hi) = mid;
  }
  double h0 = 0.5 * (lo + hi);
  std::vector<double> eta(n + 1);
  eta[0] = 0.0;
  double h = h0;
  for (int k = 0; k < n; ++k) {
    eta[k + 1] = eta[k] + std::min(h, cap);
    h *= ratio;
  }
  // Absorb the bisection remainder so the last node lands exactly on L.
  double scale = L / eta[n];
  for (auto& e : eta) e *= scale;
  eta[n] = L;
  return eta;
}

std::vector<double> boundary_refined_radii(double r0, double R, int n_core,
                                           double dr_min, double growth) {
  if (!(R > r0) || n_core < 2) throw std::invalid_argument("boundary_refined_radii: bad parameters");
  double dr_core = (R - r0) / n_core;
  dr_min = std::min(dr_min, dr_core);
  // Widths of the refined band, finest at the outer boundary.
  std::vector<double> band;
  double h = dr_min, pos = 0.0;
  while (h < dr_core && pos + h < 0.5 * (R - r0)) {
    band.push_back(h);
    pos += h;
    h *= growth;
  }
  double core_len = (R - r0) - pos;
  int m = std::max(2, (int)std::lround(core_len / dr_core));
  std::vector<double> r;
  r.push_back(r0);
  for (int i = 1; i <= m; ++i) r.push_back(r0 + core_len * i / m);
  for (auto it = band.rbegin(); it != band.rend(); ++it) r.push_back(r.back() + *it);
  r.back() = R;
  return r;
}

double smoothstep5(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 points");
  size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  double det = n * sxx - sx * sx;
  LineFit f;
  f.slope = (n * sxy - sx * sy) / det;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0, ss_tot = 0, ybar = sy / n;
  for (size_t i = 0; i < n; ++i) {
    double fit = f.intercept + f.slope * x[i];
    ss_res += (y[i] - fit) * (y[i] - fit);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

}  // namespace kinlab

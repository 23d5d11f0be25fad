#include "kinlab/milne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "kinlab/linalg.hpp"
#include "kinlab/quadrature.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kinlab::milne {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kZCut = 60.0;     // optical depth beyond which the walk stops
constexpr double kZStep = 0.7;     // target optical depth per sub-segment
constexpr int kMaxSub = 48;

double sq(double x) { return x * x; }

int resolve_threads(int t) {
#ifdef _OPENMP
  return t > 0 ? t : omp_get_max_threads();
#else
  (void)t;
  return 1;
#endif
}

// Characteristic through one anchor node (eta0, phi0, psi). All angle values
// along the path derive from the conserved energy E = exp(-W).
struct PathCtx {
  const LayerGeometry* g = nullptr;
  double s2 = 0.0, c2 = 0.0;  // sin^2 psi, cos^2 psi
  double W = 0.0;             // -ln E
  double E02 = 0.0;           // e^{-2W}
  bool flat = false;
  double flat_sin = 0.0;
  bool has_etap = false;      // V reaches W below the geometric cap
  double etap = 0.0;

  double V(double xi) const {
    if (flat) return 0.0;
    return -(s2 * std::log1p(-g->eps * xi / g->R1) + c2 * std::log1p(-g->eps * xi / g->R2));
  }
  double dV(double xi) const {
    double t1 = std::isfinite(g->R1) ? s2 / (g->R1 - g->eps * xi) : 0.0;
    double t2 = std::isfinite(g->R2) ? c2 / (g->R2 - g->eps * xi) : 0.0;
    return g->eps * (t1 + t2);
  }
  double sinp(double xi) const {
    if (flat) return flat_sin;
    double d = W - V(xi);
    if (d <= 0.0) return 0.0;
    return std::sqrt(-std::expm1(-2.0 * d));
  }
  double cosp(double xi) const { return std::exp(-(W - V(xi))); }
  double phip(double xi) const { return std::atan2(sinp(xi), cosp(xi)); }
};

PathCtx make_ctx(const LayerGeometry& g, double psi, double eta0, double phi0) {
  PathCtx c;
  c.g = &g;
  double s = std::sin(psi);
  c.s2 = s * s;
  c.c2 = 1.0 - c.s2;
  c.flat = !g.geometric;
  if (c.flat) {
    c.W = -std::log(std::cos(phi0));
    c.E02 = std::exp(-2.0 * c.W);
    c.flat_sin = std::abs(std::sin(phi0));
    return c;
  }
  c.W = c.V(eta0) - std::log(std::cos(phi0));
  c.E02 = std::exp(-2.0 * c.W);
  double cap = std::isfinite(g.rmin()) ? (g.rmin() / g.eps) * (1.0 - 1e-14)
                                       : std::numeric_limits<double>::max();
  if (c.V(cap) > c.W) {
    // Safeguarded Newton for V(etap) = W, started from the equal-radii
    // closed form with the harmonic-mean radius.
    double rh = 1.0 / (c.s2 / g.R1 + c.c2 / g.R2);
    double lo = eta0, hi = std::min(cap, 1e300);
    double x = std::clamp(rh / g.eps * (-std::expm1(-c.W)), lo, hi);
    for (int it = 0; it < 100; ++it) {
      double f = c.V(x) - c.W;
      if (std::abs(f) < 1e-15 * (1.0 + c.W)) break;
      (f < 0.0 ? lo : hi) = x;
      double xn = x - f / c.dV(x);
      if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
      if (std::abs(xn - x) < 1e-16 * (1.0 + std::abs(x))) {
        x = xn;
        break;
      }
      x = xn;
    }
    c.etap = x;
    c.has_etap = true;
  }
  return c;
}

// 3-point GL on [0,1]
constexpr double kG3x[3] = {0.1127016653792583, 0.5, 0.8872983346207417};
constexpr double kG3w[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
// 4-point GL on [0,1]
constexpr double kG4x[4] = {0.06943184420297371, 0.3300094782075719, 0.6699905217924281,
                            0.9305681557970263};
constexpr double kG4w[4] = {0.1739274225687269, 0.3260725774312731, 0.3260725774312731,
                            0.1739274225687269};

// Per-psi cache of e^{2V} at the 3 GL points of every full grid cell; turns
// the inner quadrature into multiply-and-sqrt.
struct PsiTable {
  std::vector<double> ev2_gl;  // 3 per cell
};

PsiTable build_psi_table(const LayerGeometry& g, const std::vector<double>& eta, double psi) {
  PsiTable t;
  if (!g.geometric) return t;
  PathCtx c;
  c.g = &g;
  double s = std::sin(psi);
  c.s2 = s * s;
  c.c2 = 1.0 - c.s2;
  size_t ncell = eta.size() - 1;
  t.ev2_gl.resize(3 * ncell);
  for (size_t q = 0; q < ncell; ++q)
    for (int p = 0; p < 3; ++p) {
      double xi = eta[q] + (eta[q + 1] - eta[q]) * kG3x[p];
      t.ev2_gl[3 * q + p] = std::exp(2.0 * c.V(xi));
    }
  return t;
}

// Optical depth of [a, b]; tab3 points at the cached e^{2V} GL values when
// [a, b] is a full grid cell.
double seg_dz(const PathCtx& c, double a, double b, const double* tab3 = nullptr) {
  if (b <= a) return 0.0;
  if (c.flat) return (b - a) / c.flat_sin;
  if (c.has_etap && (c.etap - b) < 8.0 * (b - a)) {
    // Substitute xi = etap - s^2; removes the 1/sqrt singularity at the
    // turning point.
    double s1 = std::sqrt(std::max(c.etap - b, 0.0));
    double s2 = std::sqrt(c.etap - a);
    double acc = 0.0;
    for (int q = 0; q < 4; ++q) {
      double s = s1 + (s2 - s1) * kG4x[q];
      acc += kG4w[q] * 2.0 * s / c.sinp(c.etap - s * s);
    }
    return acc * (s2 - s1);
  }
  double acc = 0.0;
  if (tab3) {
    for (int q = 0; q < 3; ++q) {
      double s2v = 1.0 - c.E02 * tab3[q];
      if (s2v < 1e-6) {
        acc += kG3w[q] / c.sinp(a + (b - a) * kG3x[q]);
      } else {
        acc += kG3w[q] / std::sqrt(s2v);
      }
    }
  } else {
    for (int q = 0; q < 3; ++q) acc += kG3w[q] / c.sinp(a + (b - a) * kG3x[q]);
  }
  return acc * (b - a);
}

// Walk one characteristic backward from grid node (i, j, k), emitting
// sub-segments seg(cell, xi_mid, sign, weight) ordered by increasing optical
// depth z, with weight = e^{-z_near} - e^{-z_far}. Finishes with
// wall(phi_at_wall, e^{-Z}) unless the walk was cut at kZCut.
template <class SegF, class WallF>
void walk_characteristic(const LayerGeometry& geo, const std::vector<double>& eta, double psi,
                         int i, double phi0, const PsiTable& tab, SegF&& seg, WallF&& wall) {
  PathCtx c = make_ctx(geo, psi, eta[i], phi0);
  int nn = (int)eta.size();
  double L = eta[nn - 1];
  double z = 0.0;
  double ez = 1.0;  // e^{-z}, carried along the walk

  auto piece = [&](int q, double a, double b, bool from_top, int sgn) -> bool {
    if (b <= a) return true;
    bool full = a == eta[q] && b == eta[q + 1];
    const double* tab3 = (full && !tab.ev2_gl.empty()) ? &tab.ev2_gl[3 * q] : nullptr;
    double whole = seg_dz(c, a, b, tab3);
    int ns = 1;
    if (whole > kZStep) ns = std::min((int)std::ceil(whole / kZStep), kMaxSub);
    for (int s = 0; s < ns; ++s) {
      int si = from_top ? ns - 1 - s : s;
      double pa = a + (b - a) * si / ns;
      double pb = a + (b - a) * (si + 1) / ns;
      double dz = ns == 1 ? whole : seg_dz(c, pa, pb);
      double ez1 = std::exp(-(z + dz));
      seg(q, 0.5 * (pa + pb), sgn, ez - ez1, c);
      z += dz;
      ez = ez1;
      if (z > kZCut) return false;
    }
    return true;
  };

  if (phi0 > 0.0) {
    // Region I: straight back to the wall.
    for (int q = i - 1; q >= 0; --q)
      if (!piece(q, eta[q], eta[q + 1], true, +1)) return;
  } else {
    bool turns = c.has_etap && c.etap <= L;
    double top = turns ? std::min(c.etap, L) : L;
    // Ascending part of the backward walk (descending branch of the motion).
    for (int q = i; q < nn - 1 && eta[q] < top; ++q)
      if (!piece(q, eta[q], std::min(eta[q + 1], top), false, -1)) return;
    // Past the turning point (or the specular reflection at L), walk down.
    for (int q = nn - 2; q >= 0; --q) {
      if (eta[q] >= top) continue;
      if (!piece(q, eta[q], std::min(eta[q + 1], top), true, +1)) return;
    }
  }
  wall(c.phip(0.0), ez, c);
}

double lerp_fbar(const std::vector<double>& eta, std::span<const double> fbar, int q, double xi) {
  double t = (xi - eta[q]) / (eta[q + 1] - eta[q]);
  return fbar[q] * (1.0 - t) + fbar[q + 1] * t;
}

}  // namespace

double potential_V(const LayerGeometry& g, double eta, double psi) {
  if (!g.geometric) return 0.0;
  if (g.eps * eta >= g.rmin()) throw std::domain_error("potential_V: eps*eta >= min(R1,R2)");
  double s = std::sin(psi);
  double s2 = s * s, c2 = 1.0 - s2;
  return -(s2 * std::log1p(-g.eps * eta / g.R1) + c2 * std::log1p(-g.eps * eta / g.R2));
}

double force_F(const LayerGeometry& g, double eta, double psi) {
  if (!g.geometric) return 0.0;
  if (g.eps * eta >= g.rmin()) throw std::domain_error("force_F: eps*eta >= min(R1,R2)");
  double s = std::sin(psi);
  double s2 = s * s, c2 = 1.0 - s2;
  double t1 = std::isfinite(g.R1) ? s2 / (g.R1 - g.eps * eta) : 0.0;
  double t2 = std::isfinite(g.R2) ? c2 / (g.R2 - g.eps * eta) : 0.0;
  return -g.eps * (t1 + t2);
}

double energy_E(const LayerGeometry& g, double eta, double phi, double psi) {
  return std::exp(-potential_V(g, eta, psi)) * std::cos(phi);
}

double weight_zeta(const LayerGeometry& g, double eta, double phi, double psi) {
  double e = energy_E(g, eta, phi, psi);
  return std::sqrt(std::max(0.0, 1.0 - e * e));
}

double characteristic_phi(const LayerGeometry& g, double eta, double phi, double psi,
                          double eta_to) {
  double arg = std::exp(potential_V(g, eta_to, psi) - potential_V(g, eta, psi)) * std::cos(phi);
  if (arg > 1.0 + 1e-12)
    throw std::domain_error("characteristic_phi: eta_to is past the turning point");
  return std::acos(std::min(arg, 1.0));
}

std::optional<double> eta_plus(const LayerGeometry& g, double eta, double phi, double psi,
                               double L) {
  PathCtx c = make_ctx(g, psi, eta, phi);
  if (c.flat) return phi == 0.0 ? std::optional<double>(eta) : std::nullopt;
  if (!c.has_etap || c.etap > L) return std::nullopt;
  return c.etap;
}

double g_integral(const LayerGeometry& g, double eta, double eta_from, double phi, double psi) {
  double lo = std::min(eta, eta_from), hi = std::max(eta, eta_from);
  PathCtx c = make_ctx(g, psi, eta, phi);
  if (c.has_etap && hi > c.etap * (1.0 + 1e-12))
    throw std::domain_error("g_integral: interval straddles the turning point");
  double acc = 0.0;
  int pieces = 128;
  for (int p = 0; p < pieces; ++p) {
    double a = lo + (hi - lo) * p / pieces;
    double b = lo + (hi - lo) * (p + 1) / pieces;
    acc += seg_dz(c, a, std::min(b, c.has_etap ? c.etap : b));
  }
  return eta_from <= eta ? acc : -acc;
}

Grid Grid::make(Measure m, double L, int n_eta, int n_phi, int n_psi) {
  if (n_eta < 8 || n_phi < 4) throw std::invalid_argument("milne::Grid: grid too small");
  Grid g;
  g.measure = m;
  g.eta = graded_wall_grid(L, n_eta - 1);
  if (n_phi % 2) ++n_phi;  // keep sin(phi) = 0 off the grid
  QuadRule q = gauss_legendre(n_phi, -kPi / 2.0, kPi / 2.0);
  g.phi = q.x;
  g.wphi = q.w;
  if (m == Measure::S2) {
    if (n_psi < 2) throw std::invalid_argument("milne::Grid: S2 needs n_psi >= 2");
    for (int k = 0; k < n_psi; ++k) {
      g.psi.push_back(-kPi + (k + 0.5) * 2.0 * kPi / n_psi);
      g.wpsi.push_back(2.0 * kPi / n_psi);
    }
  } else {
    g.psi = {kPi / 2.0, -kPi / 2.0};
    g.wpsi = {1.0, 1.0};
  }
  // fbar of a constant must reproduce the constant.
  double tot = 0.0;
  for (int j = 0; j < g.nphi(); ++j)
    for (int k = 0; k < g.npsi(); ++k) tot += g.avg_weight(j, k);
  if (std::abs(tot - 1.0) > 1e-10) throw std::runtime_error("milne::Grid: weight normalization");
  return g;
}

double Grid::avg_weight(int j, int k) const {
  if (measure == Measure::S2) return wphi[j] * std::cos(phi[j]) * wpsi[k] / (4.0 * kPi);
  return wphi[j] * wpsi[k] / (2.0 * kPi);
}

double Grid::ip_weight(int j, int k) const {
  if (measure == Measure::S2) return wphi[j] * std::cos(phi[j]) * wpsi[k];
  return wphi[j] * wpsi[k];
}

std::vector<double> sweep(const Problem& p, const Grid& grid, std::span<const double> fbar_in,
                          int threads) {
  if ((int)fbar_in.size() != grid.neta()) throw std::invalid_argument("sweep: fbar size");
  if (p.geom.geometric && p.geom.eps * grid.L() >= p.geom.rmin())
    throw std::invalid_argument("milne: eps * L must stay strictly below min(R1, R2)");
  std::vector<double> out(grid.size(), 0.0);
  int ne = grid.neta(), np = grid.nphi(), ns = grid.npsi();
  const bool has_src = (bool)p.source;
  std::vector<PsiTable> tabs(ns);
  for (int k = 0; k < ns; ++k) tabs[k] = build_psi_table(p.geom, grid.eta, grid.psi[k]);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(threads))
#endif
  for (int i = 0; i < ne; ++i) {
    for (int j = 0; j < np; ++j) {
      for (int k = 0; k < ns; ++k) {
        double acc = 0.0;
        walk_characteristic(
            p.geom, grid.eta, grid.psi[k], i, grid.phi[j], tabs[k],
            [&](int q, double xi, int sgn, double w, const PathCtx& c) {
              double h = lerp_fbar(grid.eta, fbar_in, q, xi);
              if (has_src) h += p.source(xi, sgn * c.phip(xi), grid.psi[k]);
              acc += w * h;
            },
            [&](double phiw, double w, const PathCtx&) {
              acc += w * p.inflow(phiw, grid.psi[k]);
            });
        out[grid.index(i, j, k)] = acc;
      }
    }
  }
  return out;
}

namespace {

// Affine representation of one source-iteration step:
// fbar_next = b + M fbar. Rows are independent; assembly is parallel by row.
void assemble(const Problem& p, const Grid& grid, std::vector<double>& M, std::vector<double>& b,
              int threads) {
  int ne = grid.neta(), np = grid.nphi(), ns = grid.npsi();
  M.assign((size_t)ne * ne, 0.0);
  b.assign(ne, 0.0);
  const bool has_src = (bool)p.source;
  std::vector<PsiTable> tabs(ns);
  for (int k = 0; k < ns; ++k) tabs[k] = build_psi_table(p.geom, grid.eta, grid.psi[k]);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(threads))
#endif
  for (int i = 0; i < ne; ++i) {
    double* row = &M[(size_t)i * ne];
    double bacc = 0.0;
    for (int j = 0; j < np; ++j) {
      for (int k = 0; k < ns; ++k) {
        double coef = grid.avg_weight(j, k);
        walk_characteristic(
            p.geom, grid.eta, grid.psi[k], i, grid.phi[j], tabs[k],
            [&](int q, double xi, int sgn, double w, const PathCtx& c) {
              double t = (xi - grid.eta[q]) / (grid.eta[q + 1] - grid.eta[q]);
              row[q] += coef * w * (1.0 - t);
              row[q + 1] += coef * w * t;
              if (has_src) bacc += coef * w * p.source(xi, sgn * c.phip(xi), grid.psi[k]);
            },
            [&](double phiw, double w, const PathCtx&) {
              bacc += coef * w * p.inflow(phiw, grid.psi[k]);
            });
      }
    }
    b[i] = bacc;
  }
}

std::vector<double> apply_affine(const std::vector<double>& M, const std::vector<double>& b,
                                 const std::vector<double>& x) {
  int n = (int)b.size();
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    const double* row = &M[(size_t)i * n];
    double acc = b[i];
    for (int j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void finalize(Solution& s, const Problem& p, const Grid& grid, int threads) {
  s.geom = p.geom;
  s.f = sweep(p, grid, s.fbar, threads);
  int ne = grid.neta(), np = grid.nphi(), ns = grid.npsi();
  s.fbar.assign(ne, 0.0);
  for (int i = 0; i < ne; ++i) {
    double acc = 0.0;
    for (int j = 0; j < np; ++j)
      for (int k = 0; k < ns; ++k) acc += grid.avg_weight(j, k) * s.f[grid.index(i, j, k)];
    s.fbar[i] = acc;
  }
  s.f_L = limit_fL(grid, s.f);
  s.inflow = p.inflow;
  DecayFit d = decay_fit(s);
  s.K0_fit = d.K0;
  s.decay_r2 = d.r2;
  s.decay_degenerate = d.degenerate;
}

}  // namespace

Solution solve(const Problem& p, const Grid& grid, const SolveOptions& opt) {
  Solution s;
  s.grid = grid;
  int ne = grid.neta();
  std::vector<double> M, b;
  assemble(p, grid, M, b, opt.threads);

  std::vector<double> fbar(ne, 0.0);
  int plain = std::min(opt.plain_iterations, opt.max_iter);
  double res = std::numeric_limits<double>::infinity();
  for (int it = 0; it < plain; ++it) {
    std::vector<double> next = apply_affine(M, b, fbar);
    res = sup_diff(next, fbar);
    fbar = std::move(next);
    ++s.iterations;
    s.residual_history.push_back(res);
    if (res < opt.tol) break;
  }
  if (res >= opt.tol) {
    // The averaging operator contracts like 1 - O(1/L^2); finish with a
    // direct solve of the same fixed point.
    std::vector<double> A((size_t)ne * ne);
    for (int i = 0; i < ne; ++i)
      for (int j = 0; j < ne; ++j)
        A[(size_t)i * ne + j] = (i == j ? 1.0 : 0.0) - M[(size_t)i * ne + j];
    LuFactors<double> lu = lu_factor(std::move(A), ne, opt.threads);
    std::vector<double> x = b;
    lu_solve(lu, x);
    fbar = std::move(x);
    s.used_direct_solve = true;
  }
  s.residual = sup_diff(apply_affine(M, b, fbar), fbar);
  s.converged = s.residual < opt.tol;
  s.fbar = std::move(fbar);
  finalize(s, p, grid, opt.threads);
  return s;
}

Solution solve_reference(const Problem& p, const Grid& grid, double tol, int max_iter) {
  Solution s;
  s.grid = grid;
  int ne = grid.neta(), np = grid.nphi(), ns = grid.npsi();
  std::vector<double> fbar(ne, 0.0);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> f = sweep(p, grid, fbar, 1);
    std::vector<double> next(ne, 0.0);
    for (int i = 0; i < ne; ++i) {
      double acc = 0.0;
      for (int j = 0; j < np; ++j)
        for (int k = 0; k < ns; ++k) acc += grid.avg_weight(j, k) * f[grid.index(i, j, k)];
      next[i] = acc;
    }
    double res = sup_diff(next, fbar);
    fbar = std::move(next);
    ++s.iterations;
    s.residual_history.push_back(res);
    s.residual = res;
    if (res < tol) {
      s.converged = true;
      break;
    }
  }
  s.fbar = fbar;
  finalize(s, p, grid, 1);
  return s;
}

double limit_fL(const Grid& grid, std::span<const double> f) {
  int i = grid.neta() - 1;
  double num = 0.0, den = 0.0;
  for (int j = 0; j < grid.nphi(); ++j) {
    double s2 = sq(std::sin(grid.phi[j]));
    for (int k = 0; k < grid.npsi(); ++k) {
      double w = grid.ip_weight(j, k);
      num += w * s2 * f[grid.index(i, j, k)];
      den += w * s2;
    }
  }
  return num / den;
}

double odd_flux_at_L(const Grid& grid, std::span<const double> f) {
  int i = grid.neta() - 1;
  double acc = 0.0;
  for (int j = 0; j < grid.nphi(); ++j)
    for (int k = 0; k < grid.npsi(); ++k)
      acc += grid.ip_weight(j, k) * std::sin(grid.phi[j]) * f[grid.index(i, j, k)];
  return acc;
}

DecayFit decay_fit(const Solution& s, double window_lo, double window_hi) {
  const Grid& g = s.grid;
  double L = g.L();
  if (window_hi <= 0.0) window_hi = 0.5 * L;
  if (window_hi <= window_lo) {
    window_lo = 0.25 * L;
    window_hi = 0.75 * L;
  }
  DecayFit out;
  double scale = 0.0;
  std::vector<double> xs, ys;
  for (int i = 0; i < g.neta(); ++i) {
    double m = 0.0;
    for (int j = 0; j < g.nphi(); ++j)
      for (int k = 0; k < g.npsi(); ++k)
        m = std::max(m, std::abs(s.f[g.index(i, j, k)] - s.f_L));
    scale = std::max(scale, m);
    if (g.eta[i] >= window_lo && g.eta[i] <= window_hi && m > 0.0) {
      xs.push_back(g.eta[i]);
      ys.push_back(std::log(m));
    }
  }
  if (scale < 1e-10 * std::max(1.0, std::abs(s.f_L)) || xs.size() < 3) {
    out.degenerate = true;
    out.decaying = false;
    return out;
  }
  LineFit fit = fit_line(xs, ys);
  out.K0 = -fit.slope;
  out.r2 = fit.r2;
  out.decaying = out.K0 > 0.0;
  return out;
}

DerivativeDiagnostics derivative_diagnostics(const Solution& s) {
  const Grid& g = s.grid;
  DerivativeDiagnostics d;
  double K0 = std::max(0.0, s.K0_fit);
  int ne = g.neta(), np = g.nphi(), ns = g.npsi();
  for (int i = 0; i < ne; ++i) {
    int il = std::max(0, i - 1), ih = std::min(ne - 1, i + 1);
    double deta = g.eta[ih] - g.eta[il];
    double grow = std::exp(std::min(K0 * g.eta[i], 300.0));
    for (int j = 0; j < np; ++j) {
      int jl = std::max(0, j - 1), jh = std::min(np - 1, j + 1);
      double dphi = g.phi[jh] - g.phi[jl];
      for (int k = 0; k < ns; ++k) {
        double fe = (s.f[g.index(ih, j, k)] - s.f[g.index(il, j, k)]) / deta;
        double fp = (s.f[g.index(i, jh, k)] - s.f[g.index(i, jl, k)]) / dphi;
        double zeta = weight_zeta(s.geom, g.eta[i], g.phi[j], g.psi[k]);
        double F = force_F(s.geom, g.eta[i], g.psi[k]);
        d.weighted_eta = std::max(d.weighted_eta, std::abs(grow * zeta * fe));
        d.weighted_phi = std::max(d.weighted_phi, std::abs(grow * F * std::cos(g.phi[j]) * fp));
        if (g.eta[i] < 0.5 && std::abs(g.phi[j]) < 0.3)
          d.unweighted_eta = std::max(d.unweighted_eta, std::abs(fe));
      }
    }
  }
  // In-flow boundary norms of the trace at eta = 0.
  double wsum = 0.0;
  for (int j = 0; j < np; ++j) {
    if (g.phi[j] <= 0.0) continue;
    for (int k = 0; k < ns; ++k) {
      double v = s.f[g.index(0, j, k)];
      wsum += g.wphi[j] * g.wpsi[k] * std::sin(g.phi[j]) * std::cos(g.phi[j]) * v * v;
      d.boundary_norm_unweighted = std::max(d.boundary_norm_unweighted, std::abs(v));
    }
  }
  d.boundary_norm_weighted = std::sqrt(wsum);
  return d;
}

}  // namespace kinlab::milne

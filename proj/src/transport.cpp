#include "kinlab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include "kinlab/linalg.hpp"
#include "kinlab/quadrature.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kinlab::transport {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kZStep = 0.7;  // target optical depth per sub-segment

int resolve_threads(int t) {
#ifdef _OPENMP
  return t > 0 ? t : omp_get_max_threads();
#else
  (void)t;
  return 1;
#endif
}

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}

// Positive roots of |x - eps s w| = rho.
int circle_roots(const Vec3& x, const Vec3& w, double eps, double rho, double out[2]) {
  double xw = dot(x, w);
  double disc = xw * xw + rho * rho - dot(x, x);
  if (disc < 0.0) return 0;
  double sd = std::sqrt(disc);
  int n = 0;
  for (double s : {(xw - sd) / eps, (xw + sd) / eps})
    if (s >= -1e-12) out[n++] = std::max(s, 0.0);
  return n;
}

}  // namespace

ExitHit exit_time(const geometry::Geometry& g, const Vec3& x, const Vec3& w, double eps) {
  using geometry::Kind;
  std::vector<double> cand;
  double roots[2];
  int n = circle_roots(x, w, eps, g.R, roots);
  for (int i = 0; i < n; ++i) cand.push_back(roots[i]);
  if (g.kind == Kind::Annulus) {
    n = circle_roots(x, w, eps, g.R_in, roots);
    for (int i = 0; i < n; ++i) cand.push_back(roots[i]);
  }
  std::sort(cand.begin(), cand.end());
  for (double s : cand) {
    Vec3 foot = x - (eps * s) * w;
    double rf = norm(foot);
    Vec3 nu;
    if (g.kind == Kind::Annulus && std::abs(rf - g.R_in) < std::abs(rf - g.R))
      nu = (-1.0 / g.R_in) * foot;
    else
      nu = (1.0 / g.R) * foot;
    if (dot(w, nu) <= 1e-12) return {s, foot};
  }
  throw std::domain_error("exit_time: no backward exit found (x outside domain?)");
}

// ---------------------------------------------------------------------------
// Ray walk shared by the planar solvers. Visits sub-segments of the backward
// ray ordered by distance, with the exact exponential weight
// (e^{-sigma s_a} - e^{-sigma s_b}) / sigma.
// ---------------------------------------------------------------------------

namespace {

struct RayOptions {
  double sigma = 1.0;
  int ntheta_lines = 0;      // insert crossings with the polar angular grid
  double max_dtheta = 0.0;   // subdivide until the polar-angle swing is below
  double max_ds = 0.0;       // subdivide until the ray parameter step is below
};

template <class Visitor>
void walk_ray(const geometry::Geometry& geom, const std::vector<double>& radii, const Vec3& x,
              const Vec3& w, double eps, const RayOptions& opt, Visitor&& visit,
              double* tb_out = nullptr, Vec3* foot_out = nullptr) {
  ExitHit hit = exit_time(geom, x, w, eps);
  if (tb_out) *tb_out = hit.t_b;
  if (foot_out) *foot_out = hit.foot;
  std::vector<double> s;
  s.push_back(0.0);
  s.push_back(hit.t_b);
  double roots[2];
  for (double rho : radii) {
    int n = circle_roots(x, w, eps, rho, roots);
    for (int i = 0; i < n; ++i)
      if (roots[i] > 1e-13 && roots[i] < hit.t_b * (1.0 - 1e-13)) s.push_back(roots[i]);
  }
  if (opt.ntheta_lines > 0) {
    for (int j = 0; j < opt.ntheta_lines; ++j) {
      double th = 2.0 * kPi * j / opt.ntheta_lines;
      Vec3 d{std::cos(th), std::sin(th), 0.0};
      double den = w.x * d.y - w.y * d.x;
      if (std::abs(den) < 1e-15) continue;
      double sc = (x.x * d.y - x.y * d.x) / (eps * den);
      if (sc > 1e-13 && sc < hit.t_b * (1.0 - 1e-13)) s.push_back(sc);
    }
  }
  // Closest approach to the origin: the polar angle swings fastest there.
  double sstar = dot(x, w) / eps;
  if (sstar > 1e-13 && sstar < hit.t_b * (1.0 - 1e-13)) s.push_back(sstar);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end(),
                      [&](double a, double b) { return std::abs(a - b) < 1e-13 * (1.0 + hit.t_b); }),
          s.end());

  double sig = opt.sigma;
  for (size_t q = 0; q + 1 < s.size(); ++q) {
    double a = s[q], b = s[q + 1];
    if (b - a <= 0.0) continue;
    if (sig * a > 60.0) break;  // remaining weight below e^{-60}
    int ns = 1;
    double dz = sig * (b - a);
    if (dz > kZStep) ns = (int)std::ceil(dz / kZStep);
    if (opt.max_ds > 0.0 && (b - a) > opt.max_ds) ns = std::max(ns, (int)std::ceil((b - a) / opt.max_ds));
    if (opt.max_dtheta > 0.0) {
      Vec3 ya = x - (eps * a) * w, yb = x - (eps * b) * w;
      double dth = std::abs(wrap_angle(std::atan2(yb.y, yb.x) - std::atan2(ya.y, ya.x)));
      if (dth > opt.max_dtheta) ns = std::max(ns, (int)std::ceil(dth / opt.max_dtheta));
    }
    ns = std::min(ns, 64);
    for (int p = 0; p < ns; ++p) {
      double pa = a + (b - a) * p / ns;
      double pb = a + (b - a) * (p + 1) / ns;
      double wgt = (std::exp(-sig * pa) - std::exp(-sig * pb)) / sig;
      Vec3 y = x - (eps * 0.5 * (pa + pb)) * w;
      visit(y, 0.5 * (pa + pb), wgt);
    }
  }
}

// Bilinear interpolation stencil of the polar node grid.
struct Stencil {
  int sid[4];
  double w[4];
  int n = 0;
};

int radial_cell(const std::vector<double>& r, double rr, double* t) {
  int lo = 0, hi = (int)r.size() - 1;
  rr = std::clamp(rr, r.front(), r.back());
  while (hi - lo > 1) {
    int mid = (lo + hi) / 2;
    (r[mid] <= rr ? lo : hi) = mid;
  }
  *t = (rr - r[lo]) / (r[lo + 1] - r[lo]);
  return lo;
}

Stencil disk_stencil(const DiskGrid& g, const Vec3& y) {
  Stencil st;
  double rr = std::hypot(y.x, y.y);
  double t;
  int i = radial_cell(g.r, rr, &t);
  double th = std::atan2(y.y, y.x);
  double dth = 2.0 * kPi / g.ntheta;
  double tj = (th < 0 ? th + 2.0 * kPi : th) / dth;
  int j = std::min((int)tj, g.ntheta - 1);
  double s = tj - j;
  if (g.has_center() && i == 0) {
    st.sid[0] = 0;
    st.w[0] = 1.0 - t;
    st.sid[1] = g.sid(1, j);
    st.w[1] = t * (1.0 - s);
    st.sid[2] = g.sid(1, j + 1);
    st.w[2] = t * s;
    st.n = 3;
  } else {
    st.sid[0] = g.sid(i, j);
    st.w[0] = (1.0 - t) * (1.0 - s);
    st.sid[1] = g.sid(i, j + 1);
    st.w[1] = (1.0 - t) * s;
    st.sid[2] = g.sid(i + 1, j);
    st.w[2] = t * (1.0 - s);
    st.sid[3] = g.sid(i + 1, j + 1);
    st.w[3] = t * s;
    st.n = 4;
  }
  return st;
}

}  // namespace

double DiskGrid::theta(int j) const { return 2.0 * kPi * j / ntheta; }
double DiskGrid::alpha(int m) const { return (m + 0.5) * 2.0 * kPi / nalpha; }
Vec3 DiskGrid::node(int i, int j) const {
  return {r[i] * std::cos(theta(j)), r[i] * std::sin(theta(j)), 0.0};
}
Vec3 DiskGrid::ordinate(int m) const { return {std::cos(alpha(m)), std::sin(alpha(m)), 0.0}; }

std::vector<double> sweep_full(const Problem& p, const DiskGrid& grid,
                               const std::vector<double>& ubar, double sigma,
                               const std::vector<double>& uprev, double qscale, double time,
                               int threads) {
  int ns = grid.nspatial(), na = grid.nalpha;
  std::vector<double> out((size_t)ns * na, 0.0);
  RayOptions ropt;
  ropt.sigma = sigma;
  ropt.ntheta_lines = grid.ntheta;
  ropt.max_dtheta = kPi / grid.ntheta;
  const bool has_src = (bool)p.source;
  const bool has_q = qscale != 0.0 && !uprev.empty();
  (void)time;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(threads))
#endif
  for (int sid = 0; sid < ns; ++sid) {
    int i, j;
    if (grid.has_center()) {
      i = sid == 0 ? 0 : 1 + (sid - 1) / grid.ntheta;
      j = sid == 0 ? 0 : (sid - 1) % grid.ntheta;
    } else {
      i = sid / grid.ntheta;
      j = sid % grid.ntheta;
    }
    Vec3 x = grid.node(i, j);
    for (int m = 0; m < na; ++m) {
      Vec3 w = grid.ordinate(m);
      double acc = 0.0;
      double tb = 0.0;
      Vec3 foot;
      walk_ray(
          p.geom, grid.r, x, w, p.eps, ropt,
          [&](const Vec3& y, double, double wgt) {
            Stencil st = disk_stencil(grid, y);
            double ub = 0.0;
            for (int q = 0; q < st.n; ++q) ub += st.w[q] * ubar[st.sid[q]];
            double h = ub;
            if (has_src) h += p.source(y, w);
            if (has_q) {
              double up = 0.0;
              for (int q = 0; q < st.n; ++q) up += st.w[q] * uprev[(size_t)st.sid[q] * na + m];
              h += qscale * up;
            }
            acc += wgt * h;
          },
          &tb, &foot);
      acc += std::exp(-sigma * tb) * p.inflow(foot, w);
      out[(size_t)sid * na + m] = acc;
    }
  }
  return out;
}

namespace {

std::vector<double> average_full(const DiskGrid& grid, const std::vector<double>& u) {
  int ns = grid.nspatial(), na = grid.nalpha;
  std::vector<double> ubar(ns, 0.0);
  for (int sid = 0; sid < ns; ++sid) {
    double acc = 0.0;
    for (int m = 0; m < na; ++m) acc += u[(size_t)sid * na + m];
    ubar[sid] = acc / na;
  }
  return ubar;
}

// Affine map ubar -> avg(sweep(ubar)) for fixed sigma; b carries the inflow,
// source, and previous-level contributions.
void assemble_full(const Problem& p, const DiskGrid& grid, double sigma,
                   const std::vector<double>& uprev, double qscale, double time,
                   const std::function<double(double, const Vec3&, const Vec3&)>& inflow_t,
                   std::vector<double>& M, std::vector<double>& b, int threads) {
  int ns = grid.nspatial(), na = grid.nalpha;
  M.assign((size_t)ns * ns, 0.0);
  b.assign(ns, 0.0);
  RayOptions ropt;
  ropt.sigma = sigma;
  ropt.ntheta_lines = grid.ntheta;
  ropt.max_dtheta = kPi / grid.ntheta;
  const bool has_src = (bool)p.source;
  const bool has_q = qscale != 0.0 && !uprev.empty();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(threads))
#endif
  for (int sid = 0; sid < ns; ++sid) {
    int i, j;
    if (grid.has_center()) {
      i = sid == 0 ? 0 : 1 + (sid - 1) / grid.ntheta;
      j = sid == 0 ? 0 : (sid - 1) % grid.ntheta;
    } else {
      i = sid / grid.ntheta;
      j = sid % grid.ntheta;
    }
    Vec3 x = grid.node(i, j);
    double* row = &M[(size_t)sid * ns];
    double bacc = 0.0;
    double coef = 1.0 / na;
    for (int m = 0; m < na; ++m) {
      Vec3 w = grid.ordinate(m);
      double tb = 0.0;
      Vec3 foot;
      walk_ray(
          p.geom, grid.r, x, w, p.eps, ropt,
          [&](const Vec3& y, double, double wgt) {
            Stencil st = disk_stencil(grid, y);
            for (int q = 0; q < st.n; ++q) row[st.sid[q]] += coef * wgt * st.w[q];
            if (has_src) bacc += coef * wgt * p.source(y, w);
            if (has_q) {
              double up = 0.0;
              for (int q = 0; q < st.n; ++q) up += st.w[q] * uprev[(size_t)st.sid[q] * na + m];
              bacc += coef * wgt * qscale * up;
            }
          },
          &tb, &foot);
      double g = inflow_t ? inflow_t(time, foot, w) : p.inflow(foot, w);
      bacc += coef * std::exp(-sigma * tb) * g;
    }
    b[sid] = bacc;
  }
}

struct FixedPointResult {
  std::vector<double> x;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> history;
  bool converged = false;
  bool used_direct = false;
};

FixedPointResult solve_affine(const std::vector<double>& M, const std::vector<double>& b,
                              const SolveOptions& opt) {
  int n = (int)b.size();
  FixedPointResult r;
  r.x.assign(n, 0.0);
  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
      const double* row = &M[(size_t)i * n];
      double acc = b[i];
      for (int j = 0; j < n; ++j) acc += row[j] * v[j];
      y[i] = acc;
    }
    return y;
  };
  double res = std::numeric_limits<double>::infinity();
  int plain = std::min(opt.plain_iterations, opt.max_iter);
  for (int it = 0; it < plain; ++it) {
    std::vector<double> next = apply(r.x);
    res = 0.0;
    for (int i = 0; i < n; ++i) res = std::max(res, std::abs(next[i] - r.x[i]));
    r.x = std::move(next);
    ++r.iterations;
    r.history.push_back(res);
    if (res < opt.tol) break;
  }
  if (res >= opt.tol) {
    std::vector<double> A((size_t)n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        A[(size_t)i * n + j] = (i == j ? 1.0 : 0.0) - M[(size_t)i * n + j];
    LuFactors<double> lu = lu_factor(std::move(A), n, opt.threads);
    std::vector<double> x = b;
    lu_solve(lu, x);
    r.x = std::move(x);
    r.used_direct = true;
  }
  std::vector<double> check = apply(r.x);
  r.residual = 0.0;
  for (int i = 0; i < n; ++i) r.residual = std::max(r.residual, std::abs(check[i] - r.x[i]));
  r.converged = r.residual < opt.tol;
  return r;
}

}  // namespace

DiskFullSolution solve_steady_full(const Problem& p, const DiskGrid& grid,
                                   const SolveOptions& opt) {
  DiskFullSolution s;
  s.grid = grid;
  std::vector<double> M, b;
  assemble_full(p, grid, 1.0, {}, 0.0, 0.0, nullptr, M, b, opt.threads);
  FixedPointResult fp = solve_affine(M, b, opt);
  s.iterations = fp.iterations;
  s.residual = fp.residual;
  s.residual_history = std::move(fp.history);
  s.converged = fp.converged;
  s.used_direct_solve = fp.used_direct;
  s.u = sweep_full(p, grid, fp.x, 1.0, {}, 0.0, 0.0, opt.threads);
  s.ubar = average_full(grid, s.u);
  return s;
}

DiskFullSolution solve_steady_full_reference(const Problem& p, const DiskGrid& grid, double tol,
                                             int max_iter) {
  DiskFullSolution s;
  s.grid = grid;
  std::vector<double> ubar(grid.nspatial(), 0.0);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> u = sweep_full(p, grid, ubar, 1.0, {}, 0.0, 0.0, 1);
    std::vector<double> next = average_full(grid, u);
    double res = 0.0;
    for (size_t i = 0; i < next.size(); ++i) res = std::max(res, std::abs(next[i] - ubar[i]));
    ubar = std::move(next);
    ++s.iterations;
    s.residual_history.push_back(res);
    s.residual = res;
    if (res < tol) {
      s.converged = true;
      break;
    }
  }
  s.u = sweep_full(p, grid, ubar, 1.0, {}, 0.0, 0.0, 1);
  s.ubar = average_full(grid, s.u);
  return s;
}

DiskFullTrajectory solve_unsteady_full(const UnsteadyProblem& p, const DiskGrid& grid,
                                       const UnsteadyOptions& opt) {
  DiskFullTrajectory tr;
  tr.grid = grid;
  const Problem& st = p.steady;
  int ns = grid.nspatial(), na = grid.nalpha;
  double eps2 = st.eps * st.eps;

  // Compatibility check h = g(0,.) on the in-flow boundary.
  double viol = 0.0;
  int ib = grid.nr() - 1;
  for (int j = 0; j < grid.ntheta; ++j) {
    Vec3 x0 = grid.node(ib, j);
    Vec3 nu = normalized(x0);
    for (int m = 0; m < na; ++m) {
      Vec3 w = grid.ordinate(m);
      if (dot(w, nu) < 0.0) {
        double g0 = p.inflow_t ? p.inflow_t(0.0, x0, w) : st.inflow(x0, w);
        viol = std::max(viol, std::abs(p.initial(x0, w) - g0));
      }
    }
  }
  tr.compatibility_violation = viol;

  std::vector<double> u((size_t)ns * na);
  for (int sid = 0; sid < ns; ++sid) {
    int i, j;
    if (grid.has_center()) {
      i = sid == 0 ? 0 : 1 + (sid - 1) / grid.ntheta;
      j = sid == 0 ? 0 : (sid - 1) % grid.ntheta;
    } else {
      i = sid / grid.ntheta;
      j = sid % grid.ntheta;
    }
    for (int m = 0; m < na; ++m) u[(size_t)sid * na + m] = p.initial(grid.node(i, j), grid.ordinate(m));
  }
  tr.times.push_back(0.0);
  tr.u.push_back(u);

  double t = 0.0;
  double dt = opt.dt0 > 0.0 ? opt.dt0 : eps2;
  std::map<double, LuFactors<double>> lus;
  std::map<double, std::vector<double>> Ms;
  while (t < opt.T - 1e-15 * opt.T) {
    double step = std::min(dt, opt.T - t);
    double sigma = 1.0 + eps2 / step;
    double qscale = eps2 / step;
    double tnew = t + step;
    std::vector<double> M, b;
    assemble_full(st, grid, sigma, u, qscale, tnew, p.inflow_t, M, b, opt.solve.threads);
    auto it = lus.find(sigma);
    if (it == lus.end()) {
      int n = ns;
      std::vector<double> A((size_t)n * n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          A[(size_t)i * n + j] = (i == j ? 1.0 : 0.0) - M[(size_t)i * n + j];
      it = lus.emplace(sigma, lu_factor(std::move(A), n, opt.solve.threads)).first;
    }
    std::vector<double> ubar = b;
    lu_solve(it->second, ubar);
    // Residual check of the fixed point at this level.
    double res = 0.0;
    {
      std::vector<double> chk(ns, 0.0);
      for (int i = 0; i < ns; ++i) {
        const double* row = &M[(size_t)i * ns];
        double acc = b[i];
        for (int j = 0; j < ns; ++j) acc += row[j] * ubar[j];
        chk[i] = acc;
      }
      for (int i = 0; i < ns; ++i) res = std::max(res, std::abs(chk[i] - ubar[i]));
    }
    if (res > opt.solve.tol * 100.0) tr.converged = false;
    Problem level = st;
    if (p.inflow_t) {
      auto gt = p.inflow_t;
      level.inflow = [gt, tnew](const Vec3& x0, const Vec3& w) { return gt(tnew, x0, w); };
    }
    u = sweep_full(level, grid, ubar, sigma, u, qscale, tnew, opt.solve.threads);
    t = tnew;
    tr.times.push_back(t);
    tr.u.push_back(u);
    if (t / eps2 > opt.coarsen_after) dt *= opt.growth;
  }
  return tr;
}

double greens_identity_residual(const DiskGrid& grid, const std::vector<double>& u,
                                const std::vector<double>& v) {
  int na = grid.nalpha;
  int nrr = grid.nr();
  double dth = 2.0 * kPi / grid.ntheta;
  double dw = 2.0 * kPi / na;
  auto val = [&](const std::vector<double>& f, int i, int j, int m) {
    return f[(size_t)grid.sid(i, j) * na + m];
  };
  // Volume integral with centered differences in r and theta.
  double lhs = 0.0;
  for (int i = 1; i < nrr; ++i) {
    int il = i - 1, ih = std::min(i + 1, nrr - 1);
    double dr = grid.r[ih] - grid.r[il];
    double cellr = 0.5 * (grid.r[std::min(i + 1, nrr - 1)] - grid.r[std::max(i - 1, 0)]);
    for (int j = 0; j < grid.ntheta; ++j) {
      double th = grid.theta(j);
      Vec3 rhat{std::cos(th), std::sin(th), 0.0};
      Vec3 that{-std::sin(th), std::cos(th), 0.0};
      for (int m = 0; m < na; ++m) {
        Vec3 w = grid.ordinate(m);
        double wr = dot(w, rhat), wt = dot(w, that);
        auto wgrad = [&](const std::vector<double>& f) {
          double fr = (val(f, ih, j, m) - val(f, il, j, m)) / dr;
          double ft = (val(f, i, j + 1, m) - val(f, i, j - 1 + grid.ntheta, m)) / (2.0 * dth);
          return wr * fr + wt * ft / grid.r[i];
        };
        double contrib = wgrad(u) * val(v, i, j, m) + wgrad(v) * val(u, i, j, m);
        lhs += contrib * grid.r[i] * cellr * dth * dw;
      }
    }
  }
  // Boundary integral over the full set Gamma with signed measure.
  double rhs = 0.0;
  int ib = nrr - 1;
  for (int j = 0; j < grid.ntheta; ++j) {
    Vec3 nu = normalized(grid.node(ib, j));
    for (int m = 0; m < na; ++m) {
      Vec3 w = grid.ordinate(m);
      rhs += dot(w, nu) * val(u, ib, j, m) * val(v, ib, j, m) * grid.r[ib] * dth * dw;
    }
  }
  return std::abs(lhs - rhs);
}

// ---------------------------------------------------------------------------
// Theta-harmonic solver.
// ---------------------------------------------------------------------------

double ModalGrid::alpha(int m) const { return (m + 0.5) * 2.0 * kPi / nalpha; }

namespace {

using Cplx = std::complex<double>;

Vec3 rotate_z(const Vec3& v, double ang) {
  double c = std::cos(ang), s = std::sin(ang);
  return {v.x * c - v.y * s, v.x * s + v.y * c, v.z};
}

struct ModalOperator {
  std::vector<std::vector<Cplx>> M;  // per mode, nr x nr
  std::vector<std::vector<Cplx>> b;  // per mode
};

void assemble_modal(const ModalProblem& p, const ModalGrid& grid, double sigma,
                    const std::vector<std::vector<Cplx>>& uprev, double qscale,
                    ModalOperator& op, int threads) {
  int nr = grid.nr(), na = grid.nalpha;
  int nm = (int)p.data.size();
  int kmax = 0;
  for (auto& d : p.data) kmax = std::max(kmax, std::abs(d.k));
  op.M.assign(nm, std::vector<Cplx>((size_t)nr * nr, 0.0));
  op.b.assign(nm, std::vector<Cplx>(nr, 0.0));
  RayOptions ropt;
  ropt.sigma = sigma;
  ropt.max_dtheta = 0.25 / std::max(1, kmax);
  const bool has_q = qscale != 0.0 && !uprev.empty();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(threads))
#endif
  for (int i = 0; i < nr; ++i) {
    Vec3 x{grid.r[i], 0.0, 0.0};
    double coef = 1.0 / na;
    for (int m = 0; m < na; ++m) {
      double beta = grid.alpha(m);
      Vec3 w{std::cos(beta), std::sin(beta), 0.0};
      double tb = 0.0;
      Vec3 foot;
      walk_ray(
          p.geom, grid.r, x, w, p.eps, ropt,
          [&](const Vec3& y, double, double wgt) {
            double ry = std::hypot(y.x, y.y);
            double thy = std::atan2(y.y, y.x);
            double t;
            int c = radial_cell(grid.r, ry, &t);
            for (int q = 0; q < nm; ++q) {
              Cplx ph = std::exp(Cplx(0.0, p.data[q].k * thy));
              op.M[q][(size_t)i * nr + c] += coef * wgt * (1.0 - t) * ph;
              op.M[q][(size_t)i * nr + c + 1] += coef * wgt * t * ph;
            }
            if (!p.source.empty()) {
              Vec3 yr = rotate_z(y, -thy);
              Vec3 wr = rotate_z(w, -thy);
              for (auto& sq : p.source) {
                for (int q = 0; q < nm; ++q)
                  if (p.data[q].k == sq.k)
                    op.b[q][i] += coef * wgt * sq.p(yr, wr) * std::exp(Cplx(0.0, sq.k * thy));
              }
            }
            if (has_q) {
              // Previous level at the same global ordinate: relative angle
              // beta_y = beta - theta(y), bilinear in (r, beta).
              double by = beta - thy;
              double tb2 = std::fmod(std::fmod(by / (2.0 * kPi / na) - 0.5, (double)na) + na, (double)na);
              int mb = (int)tb2;
              double tw = tb2 - mb;
              int mb1 = (mb + 1) % na;
              for (int q = 0; q < nm; ++q) {
                Cplx ph = std::exp(Cplx(0.0, p.data[q].k * thy));
                Cplx v0 = uprev[q][(size_t)c * na + mb] * (1.0 - t) + uprev[q][(size_t)(c + 1) * na + mb] * t;
                Cplx v1 = uprev[q][(size_t)c * na + mb1] * (1.0 - t) + uprev[q][(size_t)(c + 1) * na + mb1] * t;
                op.b[q][i] += coef * wgt * qscale * ph * (v0 * (1.0 - tw) + v1 * tw);
              }
            }
          },
          &tb, &foot);
      double thf = std::atan2(foot.y, foot.x);
      Vec3 fr = rotate_z(foot, -thf);
      Vec3 wr = rotate_z(w, -thf);
      double damp = std::exp(-sigma * tb);
      for (int q = 0; q < nm; ++q)
        op.b[q][i] += coef * damp * p.data[q].p(fr, wr) * std::exp(Cplx(0.0, p.data[q].k * thf));
    }
  }
}

std::vector<Cplx> sweep_modal_mode(const ModalProblem& p, const ModalGrid& grid, double sigma,
                                   int qmode, const std::vector<Cplx>& ubar,
                                   const std::vector<std::vector<Cplx>>& uprev, double qscale,
                                   int threads) {
  int nr = grid.nr(), na = grid.nalpha;
  int kmax = 0;
  for (auto& d : p.data) kmax = std::max(kmax, std::abs(d.k));
  std::vector<Cplx> out((size_t)nr * na, 0.0);
  RayOptions ropt;
  ropt.sigma = sigma;
  ropt.max_dtheta = 0.25 / std::max(1, kmax);
  int k = p.data[qmode].k;
  const bool has_q = qscale != 0.0 && !uprev.empty();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(threads))
#endif
  for (int i = 0; i < nr; ++i) {
    Vec3 x{grid.r[i], 0.0, 0.0};
    for (int m = 0; m < na; ++m) {
      double beta = grid.alpha(m);
      Vec3 w{std::cos(beta), std::sin(beta), 0.0};
      Cplx acc = 0.0;
      double tb = 0.0;
      Vec3 foot;
      walk_ray(
          p.geom, grid.r, x, w, p.eps, ropt,
          [&](const Vec3& y, double, double wgt) {
            double ry = std::hypot(y.x, y.y);
            double thy = std::atan2(y.y, y.x);
            double t;
            int c = radial_cell(grid.r, ry, &t);
            Cplx ph = std::exp(Cplx(0.0, k * thy));
            Cplx h = (ubar[c] * (1.0 - t) + ubar[c + 1] * t) * ph;
            if (!p.source.empty()) {
              Vec3 yr = rotate_z(y, -thy);
              Vec3 wr = rotate_z(w, -thy);
              for (auto& sq : p.source)
                if (sq.k == k) h += sq.p(yr, wr) * ph;
            }
            if (has_q) {
              double by = beta - thy;
              double tb2 = std::fmod(std::fmod(by / (2.0 * kPi / na) - 0.5, (double)na) + na, (double)na);
              int mb = (int)tb2;
              double tw = tb2 - mb;
              int mb1 = (mb + 1) % na;
              Cplx v0 = uprev[qmode][(size_t)c * na + mb] * (1.0 - t) + uprev[qmode][(size_t)(c + 1) * na + mb] * t;
              Cplx v1 = uprev[qmode][(size_t)c * na + mb1] * (1.0 - t) + uprev[qmode][(size_t)(c + 1) * na + mb1] * t;
              h += qscale * ph * (v0 * (1.0 - tw) + v1 * tw);
            }
            acc += wgt * h;
          },
          &tb, &foot);
      double thf = std::atan2(foot.y, foot.x);
      acc += std::exp(-sigma * tb) * p.data[qmode].p(rotate_z(foot, -thf), rotate_z(w, -thf)) *
             std::exp(Cplx(0.0, k * thf));
      out[(size_t)i * na + m] = acc;
    }
  }
  return out;
}

}  // namespace

double ModalSolution::value(int i, int m, double theta) const {
  double acc = 0.0;
  for (size_t q = 0; q < ks.size(); ++q)
    acc += (u[q][(size_t)i * grid.nalpha + m] * std::exp(Cplx(0.0, ks[q] * theta))).real();
  return acc;
}

double ModalSolution::ubar_at(int i, double theta) const {
  double acc = 0.0;
  for (size_t q = 0; q < ks.size(); ++q)
    acc += (ubar[q][i] * std::exp(Cplx(0.0, ks[q] * theta))).real();
  return acc;
}

ModalSolution solve_steady_modal(const ModalProblem& p, const ModalGrid& grid,
                                 const SolveOptions& opt) {
  ModalSolution s;
  s.grid = grid;
  int nr = grid.nr();
  int nm = (int)p.data.size();
  for (auto& d : p.data) s.ks.push_back(d.k);
  ModalOperator op;
  assemble_modal(p, grid, 1.0, {}, 0.0, op, opt.threads);
  s.ubar.assign(nm, std::vector<Cplx>(nr, 0.0));
  s.u.resize(nm);
  double worst = 0.0;
  int iters = 0;
  for (int q = 0; q < nm; ++q) {
    std::vector<Cplx> x(nr, 0.0);
    auto apply = [&](const std::vector<Cplx>& v) {
      std::vector<Cplx> y(nr);
      for (int i = 0; i < nr; ++i) {
        Cplx acc = op.b[q][i];
        const Cplx* row = &op.M[q][(size_t)i * nr];
        for (int j = 0; j < nr; ++j) acc += row[j] * v[j];
        y[i] = acc;
      }
      return y;
    };
    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < std::min(opt.plain_iterations, opt.max_iter); ++it) {
      std::vector<Cplx> next = apply(x);
      res = 0.0;
      for (int i = 0; i < nr; ++i) res = std::max(res, std::abs(next[i] - x[i]));
      x = std::move(next);
      ++iters;
      if (res < opt.tol) break;
    }
    if (res >= opt.tol) {
      std::vector<Cplx> A((size_t)nr * nr);
      for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nr; ++j)
          A[(size_t)i * nr + j] = (i == j ? Cplx(1.0) : Cplx(0.0)) - op.M[q][(size_t)i * nr + j];
      LuFactors<Cplx> lu = lu_factor(std::move(A), nr, opt.threads);
      std::vector<Cplx> xx = op.b[q];
      lu_solve(lu, xx);
      x = std::move(xx);
    }
    std::vector<Cplx> chk = apply(x);
    double res2 = 0.0;
    for (int i = 0; i < nr; ++i) res2 = std::max(res2, std::abs(chk[i] - x[i]));
    worst = std::max(worst, res2);
    s.ubar[q] = std::move(x);
    s.u[q] = sweep_modal_mode(p, grid, 1.0, q, s.ubar[q], {}, 0.0, opt.threads);
  }
  s.iterations = iters;
  s.residual = worst;
  s.converged = worst < opt.tol;
  return s;
}

double ModalTrajectory::value(int level, int i, int m, double theta) const {
  double acc = 0.0;
  for (size_t q = 0; q < ks.size(); ++q)
    acc += (u[level][q][(size_t)i * grid.nalpha + m] * std::exp(Cplx(0.0, ks[q] * theta))).real();
  return acc;
}

ModalTrajectory solve_unsteady_modal(const ModalProblem& p, const std::vector<ModeField>& initial,
                                     const ModalGrid& grid, const UnsteadyOptions& opt) {
  if (initial.size() != p.data.size())
    throw std::invalid_argument("solve_unsteady_modal: one initial field per datum mode");
  ModalTrajectory tr;
  tr.grid = grid;
  for (auto& d : p.data) tr.ks.push_back(d.k);
  int nr = grid.nr(), na = grid.nalpha;
  int nm = (int)p.data.size();
  double eps2 = p.eps * p.eps;

  std::vector<std::vector<Cplx>> u(nm, std::vector<Cplx>((size_t)nr * na));
  for (int q = 0; q < nm; ++q)
    for (int i = 0; i < nr; ++i)
      for (int m = 0; m < na; ++m)
        u[q][(size_t)i * na + m] = initial[q](grid.r[i], grid.alpha(m));
  tr.times.push_back(0.0);
  tr.u.push_back(u);

  double t = 0.0;
  double dt = opt.dt0 > 0.0 ? opt.dt0 : eps2;
  std::map<double, std::vector<LuFactors<Cplx>>> lus;
  while (t < opt.T - 1e-15 * opt.T) {
    double step = std::min(dt, opt.T - t);
    double sigma = 1.0 + eps2 / step;
    double qscale = eps2 / step;
    ModalOperator op;
    assemble_modal(p, grid, sigma, u, qscale, op, opt.solve.threads);
    auto it = lus.find(sigma);
    if (it == lus.end()) {
      std::vector<LuFactors<Cplx>> fs;
      for (int q = 0; q < nm; ++q) {
        std::vector<Cplx> A((size_t)nr * nr);
        for (int i = 0; i < nr; ++i)
          for (int j = 0; j < nr; ++j)
            A[(size_t)i * nr + j] = (i == j ? Cplx(1.0) : Cplx(0.0)) - op.M[q][(size_t)i * nr + j];
        fs.push_back(lu_factor(std::move(A), nr, opt.solve.threads));
      }
      it = lus.emplace(sigma, std::move(fs)).first;
    }
    std::vector<std::vector<Cplx>> unew(nm);
    for (int q = 0; q < nm; ++q) {
      std::vector<Cplx> ub = op.b[q];
      lu_solve(it->second[q], ub);
      unew[q] = sweep_modal_mode(p, grid, sigma, q, ub, u, qscale, opt.solve.threads);
    }
    u = std::move(unew);
    t += step;
    tr.times.push_back(t);
    tr.u.push_back(u);
    if (t / eps2 > opt.coarsen_after) dt *= opt.growth;
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Ball modes.
// ---------------------------------------------------------------------------

namespace {

struct BallFrame {
  std::vector<Vec3> ords;
  std::vector<double> wts;
};

BallFrame ball_ordinates(int npol, int naz) {
  BallFrame f;
  QuadRule q = gauss_legendre(npol);  // in mu = cos(Theta)
  for (int i = 0; i < npol; ++i) {
    double mu = q.x[i], st = std::sqrt(1.0 - mu * mu);
    for (int j = 0; j < naz; ++j) {
      double az = (j + 0.5) * 2.0 * kPi / naz;
      f.ords.push_back({st * std::cos(az), st * std::sin(az), mu});
      f.wts.push_back(q.w[i] * 2.0 * kPi / naz);
    }
  }
  return f;
}

struct BallIndexer {
  const BallGrid* g;
  int sid(int i, int l, int a) const {
    if (i == 0) return 0;
    int nl = g->npolar, na = g->naz_spatial;
    return 1 + ((i - 1) * nl + l) * na + ((a % na + na) % na);
  }
  Vec3 node(int i, int l, int a) const {
    double r = g->r[i];
    double th = g->npolar > 1 ? kPi * l / (g->npolar - 1) : 0.5 * kPi;
    double az = 2.0 * kPi * a / g->naz_spatial;
    return {r * std::sin(th) * std::cos(az), r * std::sin(th) * std::sin(az), r * std::cos(th)};
  }
  // Trilinear stencil (bilinear when axisymmetric).
  void stencil(const Vec3& y, int* sids, double* ws, int* n) const {
    double rr = norm(y);
    double t;
    int i = radial_cell(g->r, rr, &t);
    double th = rr > 0 ? std::acos(std::clamp(y.z / rr, -1.0, 1.0)) : 0.0;
    double ft = g->npolar > 1 ? th / (kPi / (g->npolar - 1)) : 0.0;
    int l = std::min((int)ft, g->npolar - 2);
    double s = std::clamp(ft - l, 0.0, 1.0);
    int cnt = 0;
    auto push = [&](int sidv, double wv) {
      if (wv == 0.0) return;
      sids[cnt] = sidv;
      ws[cnt] = wv;
      ++cnt;
    };
    if (g->naz_spatial == 1) {
      if (i == 0) {
        push(0, 1.0 - t);
        push(sid(1, l, 0), t * (1.0 - s));
        push(sid(1, l + 1, 0), t * s);
      } else {
        push(sid(i, l, 0), (1.0 - t) * (1.0 - s));
        push(sid(i, l + 1, 0), (1.0 - t) * s);
        push(sid(i + 1, l, 0), t * (1.0 - s));
        push(sid(i + 1, l + 1, 0), t * s);
      }
    } else {
      double az = std::atan2(y.y, y.x);
      double fa = (az < 0 ? az + 2.0 * kPi : az) / (2.0 * kPi / g->naz_spatial);
      int a = std::min((int)fa, g->naz_spatial - 1);
      double ta = fa - a;
      auto ring = [&](int ii, double wv) {
        if (ii == 0) {
          push(0, wv);
          return;
        }
        push(sid(ii, l, a), wv * (1.0 - s) * (1.0 - ta));
        push(sid(ii, l, a + 1), wv * (1.0 - s) * ta);
        push(sid(ii, l + 1, a), wv * s * (1.0 - ta));
        push(sid(ii, l + 1, a + 1), wv * s * ta);
      };
      ring(i, 1.0 - t);
      ring(i + 1, t);
    }
    *n = cnt;
  }
};

}  // namespace

BallSolution solve_steady_ball(const Problem& p, const BallGrid& grid, const SolveOptions& opt) {
  BallSolution s;
  s.grid = grid;
  BallFrame frame = ball_ordinates(grid.nord_polar, grid.nord_az);
  s.ordinates = frame.ords;
  s.ord_weights = frame.wts;
  BallIndexer ix{&grid};
  int ns = grid.nspatial();
  int no = (int)frame.ords.size();
  double wtot = 0.0;
  for (double w : frame.wts) wtot += w;

  // Smallest spatial scale for the ray subdivision.
  double hmin = grid.r.back();
  for (size_t i = 1; i < grid.r.size(); ++i) hmin = std::min(hmin, grid.r[i] - grid.r[i - 1]);
  if (grid.npolar > 1) hmin = std::min(hmin, 0.5 * grid.r.back() * kPi / (grid.npolar - 1));
  RayOptions ropt;
  ropt.sigma = 1.0;
  ropt.max_ds = 0.5 * hmin / p.eps;

  std::vector<double> M((size_t)ns * ns, 0.0), b(ns, 0.0);
  std::vector<std::pair<Vec3, int>> nodes;  // position, sid
  nodes.push_back({{0, 0, 0}, 0});
  for (int i = 1; i < (int)grid.r.size(); ++i)
    for (int l = 0; l < grid.npolar; ++l)
      for (int a = 0; a < grid.naz_spatial; ++a) nodes.push_back({ix.node(i, l, a), ix.sid(i, l, a)});

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(opt.threads))
#endif
  for (size_t nidx = 0; nidx < nodes.size(); ++nidx) {
    const Vec3& x = nodes[nidx].first;
    int sid = nodes[nidx].second;
    double* row = &M[(size_t)sid * ns];
    double bacc = 0.0;
    for (int m = 0; m < no; ++m) {
      const Vec3& w = frame.ords[m];
      double coef = frame.wts[m] / wtot;
      double tb = 0.0;
      Vec3 foot;
      walk_ray(
          p.geom, grid.r, x, w, p.eps, ropt,
          [&](const Vec3& y, double sa, double wgt) {
            (void)sa;
            int sids[8];
            double ws[8];
            int n = 0;
            ix.stencil(y, sids, ws, &n);
            for (int q = 0; q < n; ++q) row[sids[q]] += coef * wgt * ws[q];
            if (p.source) bacc += coef * wgt * p.source(y, w);
          },
          &tb, &foot);
      bacc += coef * std::exp(-tb) * p.inflow(foot, w);
    }
    b[sid] = bacc;
  }
  FixedPointResult fp = solve_affine(M, b, opt);
  s.iterations = fp.iterations;
  s.residual = fp.residual;
  s.converged = fp.converged;
  s.ubar = fp.x;
  // Final sweep.
  s.u.assign((size_t)ns * no, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(resolve_threads(opt.threads))
#endif
  for (size_t nidx = 0; nidx < nodes.size(); ++nidx) {
    const Vec3& x = nodes[nidx].first;
    int sid = nodes[nidx].second;
    for (int m = 0; m < no; ++m) {
      const Vec3& w = frame.ords[m];
      double acc = 0.0;
      double tb = 0.0;
      Vec3 foot;
      walk_ray(
          p.geom, grid.r, x, w, p.eps, ropt,
          [&](const Vec3& y, double, double wgt) {
            int sids[8];
            double ws[8];
            int n = 0;
            ix.stencil(y, sids, ws, &n);
            double ub = 0.0;
            for (int q = 0; q < n; ++q) ub += ws[q] * s.ubar[sids[q]];
            acc += wgt * (ub + (p.source ? p.source(y, w) : 0.0));
          },
          &tb, &foot);
      acc += std::exp(-tb) * p.inflow(foot, w);
      s.u[(size_t)sid * no + m] = acc;
    }
  }
  return s;
}

}  // namespace kinlab::transport

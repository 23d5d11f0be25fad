#include "kinlab/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "kinlab/quadrature.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kinlab::asymptotics {

namespace {
constexpr double kPi = std::numbers::pi;
using Cplx = std::complex<double>;
}  // namespace

double BoundaryDatum::eval(double iota, double phi, double psi) const {
  double acc = 0.0;
  for (const auto& t : terms)
    acc += (t.c * std::exp(Cplx(0.0, t.k * iota))).real() * t.p(phi, psi);
  return acc;
}

int BoundaryDatum::max_mode() const {
  int k = 0;
  for (const auto& t : terms) k = std::max(k, std::abs(t.k));
  return k;
}

Cutoffs smooth_cutoffs(const std::function<double(double, double)>& g, double eps, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("smooth_cutoffs: alpha in (0,1]");
  Cutoffs c;
  double band = std::pow(eps, alpha);
  c.band = band;
  c.g1 = [g, band](double phi, double psi) {
    if (phi <= band) return 0.0;
    double s = smoothstep5((phi - band) / band);
    return g(phi, psi) * s;
  };
  c.g2 = [g, band](double phi, double psi) {
    if (phi <= band) return 1.0;
    double s = smoothstep5((phi - band) / band);
    return g(phi, psi) * s + (1.0 - s);
  };
  return c;
}

namespace {

struct NormalizedDatum {
  double gmin = 0.0, gmax = 1.0;
  bool constant = false;
  std::function<double(double, double)> ghat;  // (g - gmin) / (gmax - gmin)
};

NormalizedDatum normalize_inflow(const std::function<double(double, double)>& g,
                                 const milne::Grid& grid) {
  NormalizedDatum n;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int j = 0; j < grid.nphi(); ++j) {
    if (grid.phi[j] <= 0.0) continue;
    for (int k = 0; k < grid.npsi(); ++k) {
      double v = g(grid.phi[j], grid.psi[k]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  n.gmin = lo;
  n.gmax = hi;
  if (hi - lo < 1e-13 * std::max(1.0, std::abs(hi))) {
    n.constant = true;
    n.ghat = [](double, double) { return 0.0; };
  } else {
    n.ghat = [g, lo, hi](double phi, double psi) { return (g(phi, psi) - lo) / (hi - lo); };
  }
  return n;
}

}  // namespace

DataDecomposition decompose_boundary_data(const std::function<double(double, double)>& g,
                                          const milne::LayerGeometry& geom,
                                          const milne::Grid& grid, double alpha,
                                          const milne::SolveOptions& opt) {
  DataDecomposition d;
  d.alpha = alpha;
  NormalizedDatum nd = normalize_inflow(g, grid);
  d.gmin = nd.gmin;
  d.gmax = nd.gmax;
  if (nd.constant) {
    d.degenerate_constant = true;
    d.lambda = 0.5;
    d.regular = g;
    d.singular = [](double, double) { return 0.0; };
    return d;
  }
  Cutoffs cut = smooth_cutoffs(nd.ghat, geom.eps, alpha);
  milne::Problem p1{geom, cut.g1, nullptr};
  milne::Problem p2{geom, cut.g2, nullptr};
  milne::Solution s1 = milne::solve(p1, grid, opt);
  milne::Solution s2 = milne::solve(p2, grid, opt);
  double f1bar0 = s1.fbar[0], f2bar0 = s2.fbar[0];
  // lambda (f1(0,0+) - f1bar(0)) + (1-lambda)(f2(0,0+) - f2bar(0)) = 0 with
  // f1(0,0+) = 0 and f2(0,0+) = 1.
  d.lambda = (1.0 - f2bar0) / (1.0 - f2bar0 + f1bar0);
  d.lambda_in_01 = d.lambda > 0.0 && d.lambda < 1.0;

  double lam = d.lambda, lo = d.gmin, span = d.gmax - d.gmin;
  auto g1 = cut.g1, g2 = cut.g2;
  auto glam = [g1, g2, lam](double phi, double psi) {
    return lam * g1(phi, psi) + (1.0 - lam) * g2(phi, psi);
  };
  d.regular = [glam, lo, span](double phi, double psi) { return lo + span * glam(phi, psi); };
  auto reg = d.regular;
  d.singular = [g, reg](double phi, double psi) { return g(phi, psi) - reg(phi, psi); };

  // Certificate solve with the matched datum.
  milne::Problem pl{geom, glam, nullptr};
  milne::Solution sl = milne::solve(pl, grid, opt);
  double wall_value = 1.0 - lam;  // g_lambda on (0, eps^alpha]
  d.matching_residual = std::abs(wall_value - sl.fbar[0]);
  // d f/d eta at the corner from the equation itself: the datum is constant
  // in phi on the band, so sin(phi) df/deta = -(f - fbar) there.
  double phistar = 0.5 * cut.band;
  d.grazing_eta_derivative = std::abs(-(wall_value - sl.fbar[0]) / std::sin(phistar));
  // One-sided finite-difference probe of the same quantity.
  {
    const milne::Grid& gr = sl.grid;
    int jlo = 0;
    while (jlo < gr.nphi() && gr.phi[jlo] < phistar) ++jlo;
    jlo = std::clamp(jlo, 1, gr.nphi() - 1);
    double t = (phistar - gr.phi[jlo - 1]) / (gr.phi[jlo] - gr.phi[jlo - 1]);
    auto at = [&](int i, int j) { return sl.f[gr.index(i, j, 0)]; };
    double f0 = at(0, jlo - 1) * (1.0 - t) + at(0, jlo) * t;
    double f1 = at(1, jlo - 1) * (1.0 - t) + at(1, jlo) * t;
    d.grazing_eta_derivative_fd = std::abs((f1 - f0) / (gr.eta[1] - gr.eta[0]));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Layer stack.
// ---------------------------------------------------------------------------

namespace {

milne::LayerGeometry layer_geometry(const geometry::Geometry& geom, double eps, bool flat) {
  milne::LayerGeometry lg;
  lg.eps = eps;
  lg.geometric = !flat;
  if (geom.kind == geometry::Kind::Ball) {
    lg.R1 = lg.R2 = geom.R;
  } else {
    lg.R1 = geom.R;
    lg.R2 = std::numeric_limits<double>::infinity();
  }
  return lg;
}

// Real trig-series coefficients over uniform periodic nodes.
std::vector<Cplx> dft_modes(const std::vector<double>& values) {
  int n = (int)values.size();
  int kmax = n / 2;
  std::vector<Cplx> c(kmax + 1, 0.0);
  for (int k = 0; k <= kmax; ++k) {
    Cplx acc = 0.0;
    for (int b = 0; b < n; ++b)
      acc += values[b] * std::exp(Cplx(0.0, -k * 2.0 * kPi * b / n));
    double scale = (k == 0 || 2 * k == n) ? 1.0 / n : 2.0 / n;
    c[k] = acc * scale;
  }
  return c;
}

double trig_eval(const std::vector<Cplx>& modes, double iota) {
  double acc = 0.0;
  for (size_t k = 0; k < modes.size(); ++k)
    acc += (modes[k] * std::exp(Cplx(0.0, (double)k * iota))).real();
  return acc;
}

struct GridLocator {
  int i0 = 0, i1 = 0;
  double ti = 0.0;
  int j0 = 0, j1 = 0;
  double tj = 0.0;
  int k0 = 0, k1 = 0;
  double tk = 0.0;
};

bool locate(const milne::Grid& g, double eta, double phi, double psi, GridLocator* loc) {
  if (eta >= g.L()) return false;
  // eta cell
  int lo = 0, hi = g.neta() - 1;
  while (hi - lo > 1) {
    int mid = (lo + hi) / 2;
    (g.eta[mid] <= eta ? lo : hi) = mid;
  }
  loc->i0 = lo;
  loc->i1 = lo + 1;
  loc->ti = (eta - g.eta[lo]) / (g.eta[lo + 1] - g.eta[lo]);
  // phi cell with clamped ends
  if (phi <= g.phi.front()) {
    loc->j0 = loc->j1 = 0;
    loc->tj = 0.0;
  } else if (phi >= g.phi.back()) {
    loc->j0 = loc->j1 = g.nphi() - 1;
    loc->tj = 0.0;
  } else {
    int jlo = 0, jhi = g.nphi() - 1;
    while (jhi - jlo > 1) {
      int mid = (jlo + jhi) / 2;
      (g.phi[mid] <= phi ? jlo : jhi) = mid;
    }
    loc->j0 = jlo;
    loc->j1 = jlo + 1;
    loc->tj = (phi - g.phi[jlo]) / (g.phi[jlo + 1] - g.phi[jlo]);
  }
  // psi
  if (g.measure == milne::Measure::S1) {
    loc->k0 = loc->k1 = std::sin(psi) >= 0.0 ? 0 : 1;
    loc->tk = 0.0;
  } else {
    int n = g.npsi();
    double step = 2.0 * kPi / n;
    double f = (psi - g.psi[0]) / step;
    double fm = f - std::floor(f / n) * n;
    int k = (int)std::floor(fm);
    loc->k0 = ((k % n) + n) % n;
    loc->k1 = (loc->k0 + 1) % n;
    loc->tk = fm - k;
  }
  return true;
}

double interp_modes(const std::vector<std::vector<Cplx>>& modes, const milne::Grid& g,
                    const GridLocator& loc, double iota) {
  double acc = 0.0;
  for (size_t k = 0; k < modes.size(); ++k) {
    const auto& f = modes[k];
    auto at = [&](int i, int j, int kk) { return f[g.index(i, j, kk)]; };
    Cplx v00 = at(loc.i0, loc.j0, loc.k0) * (1.0 - loc.tk) + at(loc.i0, loc.j0, loc.k1) * loc.tk;
    Cplx v01 = at(loc.i0, loc.j1, loc.k0) * (1.0 - loc.tk) + at(loc.i0, loc.j1, loc.k1) * loc.tk;
    Cplx v10 = at(loc.i1, loc.j0, loc.k0) * (1.0 - loc.tk) + at(loc.i1, loc.j0, loc.k1) * loc.tk;
    Cplx v11 = at(loc.i1, loc.j1, loc.k0) * (1.0 - loc.tk) + at(loc.i1, loc.j1, loc.k1) * loc.tk;
    Cplx v0 = v00 * (1.0 - loc.tj) + v01 * loc.tj;
    Cplx v1 = v10 * (1.0 - loc.tj) + v11 * loc.tj;
    Cplx v = v0 * (1.0 - loc.ti) + v1 * loc.ti;
    acc += (v * std::exp(Cplx(0.0, (double)k * iota))).real();
  }
  return acc;
}

}  // namespace

double LayerStack::boundary_D(double io) const { return trig_eval(D_modes, io); }

double LayerStack::layer0(double io, double eta, double phi, double psi) const {
  if (eta >= grid.L()) return 0.0;
  if (eta <= 1e-14 && std::sin(phi) > 0.0)
    return datum.eval(io, phi, psi) - boundary_D(io);  // exact in-flow trace
  GridLocator loc;
  if (!locate(grid, eta, phi, psi, &loc)) return 0.0;
  return interp_modes(modes0, grid, loc, io);
}

double LayerStack::layer1(double io, double eta, double phi, double psi) const {
  if (modes1.empty() || eta >= grid.L()) return 0.0;
  if (eta <= 1e-14 && std::sin(phi) > 0.0 && !gn_modes.empty()) {
    // exact in-flow trace: w . grad U0 - F_{1,L}
    double gn = trig_eval(gn_modes, io), gt = trig_eval(gt_modes, io);
    return -std::sin(phi) * gn + std::cos(phi) * std::sin(psi) * gt - trig_eval(F1L_modes, io);
  }
  GridLocator loc;
  if (!locate(grid, eta, phi, psi, &loc)) return 0.0;
  return interp_modes(modes1, grid, loc, io);
}

LayerStack build_layer_stack(const geometry::Geometry& geom, double eps,
                             const BoundaryDatum& datum, const StackOptions& opt) {
  LayerStack st;
  st.geom = geom;
  st.eps = eps;
  st.opt = opt;
  st.datum = datum;
  double L = std::pow(eps, -opt.L_exponent);
  milne::Measure meas =
      geom.kind == geometry::Kind::Ball ? milne::Measure::S2 : milne::Measure::S1;
  int neta = opt.n_eta > 0 ? opt.n_eta : std::clamp((int)(28 * L), 140, 420);
  int npsi = meas == milne::Measure::S1 ? 2 : std::max(opt.n_psi, 4);
  st.grid = milne::Grid::make(meas, L, neta, opt.n_phi, npsi);
  milne::LayerGeometry lg = layer_geometry(geom, eps, opt.flat);

  int B = geom.kind == geometry::Kind::Ball ? 1 : opt.n_boundary_nodes;
  st.iota.resize(B);
  for (int b = 0; b < B; ++b) st.iota[b] = 2.0 * kPi * b / B;
  st.nodes.resize(B);

  milne::SolveOptions nodeopt = opt.solve;
#ifdef _OPENMP
  nodeopt.threads = 1;
#pragma omp parallel for schedule(dynamic)
#endif
  for (int b = 0; b < B; ++b) {
    double io = st.iota[b];
    auto gb = [io, &datum](double phi, double psi) { return datum.eval(io, phi, psi); };
    NodeLayers& nl = st.nodes[b];
    if (opt.decompose) {
      // Construct the decomposition without the certificate solve; the
      // regular-layer solve below plays that role.
      NormalizedDatum nd = normalize_inflow(gb, st.grid);
      if (nd.constant) {
        nl.deco.degenerate_constant = true;
        nl.deco.gmin = nd.gmin;
        nl.deco.gmax = nd.gmax;
        nl.deco.regular = gb;
        nl.deco.singular = [](double, double) { return 0.0; };
      } else {
        Cutoffs cut = smooth_cutoffs(nd.ghat, eps, opt.alpha);
        milne::Solution s1 = milne::solve({lg, cut.g1, nullptr}, st.grid, nodeopt);
        milne::Solution s2 = milne::solve({lg, cut.g2, nullptr}, st.grid, nodeopt);
        double lam = (1.0 - s2.fbar[0]) / (1.0 - s2.fbar[0] + s1.fbar[0]);
        nl.deco.alpha = opt.alpha;
        nl.deco.lambda = lam;
        nl.deco.lambda_in_01 = lam > 0.0 && lam < 1.0;
        nl.deco.gmin = nd.gmin;
        nl.deco.gmax = nd.gmax;
        double lo = nd.gmin, span = nd.gmax - nd.gmin;
        auto g1 = cut.g1, g2 = cut.g2;
        nl.deco.regular = [g1, g2, lam, lo, span](double phi, double psi) {
          return lo + span * (lam * g1(phi, psi) + (1.0 - lam) * g2(phi, psi));
        };
        auto reg = nl.deco.regular;
        nl.deco.singular = [gb, reg](double phi, double psi) {
          return gb(phi, psi) - reg(phi, psi);
        };
        // By linearity the matched solve has fbar(0) = lam f1bar + (1-lam) f2bar.
        double fbar0 = lam * s1.fbar[0] + (1.0 - lam) * s2.fbar[0];
        nl.deco.matching_residual = std::abs((1.0 - lam) - fbar0);
        nl.deco.grazing_eta_derivative =
            std::abs(-((1.0 - lam) - fbar0) / std::sin(0.5 * cut.band));
      }
      nl.reg0 = milne::solve({lg, nl.deco.regular, nullptr}, st.grid, nodeopt);
      nl.sing0 = milne::solve({lg, nl.deco.singular, nullptr}, st.grid, nodeopt);
    } else {
      nl.deco.regular = gb;
      nl.deco.singular = [](double, double) { return 0.0; };
      nl.reg0 = milne::solve({lg, gb, nullptr}, st.grid, nodeopt);
      nl.sing0 = nl.reg0;
      nl.sing0.f.assign(nl.sing0.f.size(), 0.0);
      nl.sing0.fbar.assign(nl.sing0.fbar.size(), 0.0);
      nl.sing0.f_L = 0.0;
    }
    nl.F0L_reg = nl.reg0.f_L;
    nl.F0L_sing = nl.sing0.f_L;
  }

  // Fourier modes over the nodes of the total decaying layer.
  size_t gsz = st.grid.size();
  int kmax = B / 2;
  st.modes0.assign(kmax + 1, std::vector<Cplx>(gsz, 0.0));
  std::vector<double> vals(B);
  for (size_t idx = 0; idx < gsz; ++idx) {
    for (int b = 0; b < B; ++b)
      vals[b] = (st.nodes[b].reg0.f[idx] - st.nodes[b].F0L_reg) +
                (st.nodes[b].sing0.f[idx] - st.nodes[b].F0L_sing);
    std::vector<Cplx> c = dft_modes(vals);
    for (int k = 0; k <= kmax; ++k) st.modes0[k][idx] = c[k];
  }
  std::vector<double> dvals(B);
  for (int b = 0; b < B; ++b) dvals[b] = st.nodes[b].F0L_reg + st.nodes[b].F0L_sing;
  st.D_modes = dft_modes(dvals);
  return st;
}

void add_first_order(LayerStack& st, const fluid::DiskHarmonic& U0) {
  if (st.geom.kind == geometry::Kind::Ball)
    throw std::invalid_argument("add_first_order: first-order layers are built on planar domains");
  int B = (int)st.iota.size();
  const milne::Grid& gr = st.grid;
  double R = st.geom.R, eps = st.eps;
  bool flat = st.opt.flat;
  milne::SolveOptions nodeopt = st.opt.solve;
#ifdef _OPENMP
  nodeopt.threads = 1;
#pragma omp parallel for schedule(dynamic)
#endif
  for (int b = 0; b < B; ++b) {
    geometry::BoundaryFrame fr = geometry::boundary_frame(st.geom, st.iota[b]);
    Vec3 gradU0 = U0.grad(fr.point);
    double gn = dot(fr.normal, gradU0), gt = dot(fr.tangent1, gradU0);
    auto datum1 = [gn, gt](double phi, double psi) {
      // w . grad U0 with w = -sin(phi) nu + cos(phi) sin(psi) t1 + ...
      return -std::sin(phi) * gn + std::cos(phi) * std::sin(psi) * gt;
    };
    // Tangential derivative of the zeroth-order regular layer by centered
    // differences over the neighbouring node solves.
    int bm = (b + B - 1) % B, bp = (b + 1) % B;
    const milne::Solution& sm = st.nodes[bm].reg0;
    const milne::Solution& sp = st.nodes[bp].reg0;
    double fm_L = st.nodes[bm].F0L_reg, fp_L = st.nodes[bp].F0L_reg;
    double dio = 2.0 * (2.0 * kPi / B);
    const milne::Grid* grp = &gr;
    auto source = [grp, &sm, &sp, fm_L, fp_L, dio, R, eps, flat](double eta, double phi,
                                                                 double psi) {
      GridLocator loc;
      if (!locate(*grp, eta, phi, psi, &loc)) return 0.0;
      auto lerp = [&](const milne::Solution& s, double fL) {
        auto at = [&](int i, int j, int k) { return s.f[grp->index(i, j, k)] - fL; };
        double v0 = at(loc.i0, loc.j0, loc.k0) * (1.0 - loc.tj) + at(loc.i0, loc.j1, loc.k0) * loc.tj;
        double v1 = at(loc.i1, loc.j0, loc.k0) * (1.0 - loc.tj) + at(loc.i1, loc.j1, loc.k0) * loc.tj;
        return v0 * (1.0 - loc.ti) + v1 * loc.ti;
      };
      double dudio = (lerp(sp, fp_L) - lerp(sm, fm_L)) / dio;
      double denom = flat ? R : R - eps * eta;
      // -G[U_0]: the tangential advection moved to the right-hand side.
      return -std::cos(phi) * std::sin(psi) / denom * dudio * R / R;
    };
    milne::LayerGeometry lg = layer_geometry(st.geom, eps, flat);
    st.nodes[b].reg1 = milne::solve({lg, datum1, source}, gr, nodeopt);
    st.nodes[b].F1L = st.nodes[b].reg1->f_L;
  }
  size_t gsz = gr.size();
  int kmax = B / 2;
  st.modes1.assign(kmax + 1, std::vector<Cplx>(gsz, 0.0));
  std::vector<double> vals(B);
  for (size_t idx = 0; idx < gsz; ++idx) {
    for (int b = 0; b < B; ++b) vals[b] = st.nodes[b].reg1->f[idx] - st.nodes[b].F1L;
    std::vector<Cplx> c = dft_modes(vals);
    for (int k = 0; k <= kmax; ++k) st.modes1[k][idx] = c[k];
  }
  std::vector<double> f1(B);
  for (int b = 0; b < B; ++b) f1[b] = st.nodes[b].F1L;
  st.F1L_modes = dft_modes(f1);
  std::vector<double> gns(B), gts(B);
  for (int b = 0; b < B; ++b) {
    geometry::BoundaryFrame fr = geometry::boundary_frame(st.geom, st.iota[b]);
    Vec3 g0 = U0.grad(fr.point);
    gns[b] = dot(fr.normal, g0);
    gts[b] = dot(fr.tangent1, g0);
  }
  st.gn_modes = dft_modes(gns);
  st.gt_modes = dft_modes(gts);
}

// ---------------------------------------------------------------------------
// Initial layer and compatibility.
// ---------------------------------------------------------------------------

double InitialLayer::eval(double tau, const Vec3& x, const Vec3& w, double eps) const {
  double decay = std::exp(-tau);
  double v = decay * (h(x, w) - hbar(x));
  if (order >= 1) {
    Vec3 gh = grad_h(x, w);
    Vec3 ghb = grad_hbar(x);
    Vec3 gu = grad_U0_at0(x);
    double aniso = dot(w, gh - ghb);
    v += eps * decay * (dot(w, gu) + avg_wgrad_h(x) - aniso);
  }
  return v;
}

CompatibilityReport compatibility_check(
    const geometry::Geometry& geom, const std::function<double(const Vec3&, const Vec3&)>& h,
    const std::function<double(const Vec3&)>& hbar,
    const std::function<double(double, const Vec3&, const Vec3&)>& g,
    const std::function<double(const Vec3&, const Vec3&)>& dtg0, int n_boundary, int n_ordinate,
    double tol) {
  CompatibilityReport rep;
  bool planar = geom.kind != geometry::Kind::Ball;
  double C0 = 0.0;
  bool have_c0 = false;
  auto visit = [&](const Vec3& x0, const Vec3& nu, const Vec3& w) {
    if (dot(w, nu) >= 0.0) return;
    rep.basic_sup = std::max(rep.basic_sup, std::abs(h(x0, w) - g(0.0, x0, w)));
    if (dtg0) rep.dtg_sup = std::max(rep.dtg_sup, std::abs(dtg0(x0, w)));
    // w . grad h by central differences.
    double d = 1e-6 * geom.R;
    double gx = (h({x0.x + d, x0.y, x0.z}, w) - h({x0.x - d, x0.y, x0.z}, w)) / (2 * d);
    double gy = (h({x0.x, x0.y + d, x0.z}, w) - h({x0.x, x0.y - d, x0.z}, w)) / (2 * d);
    double gz = planar ? 0.0 : (h({x0.x, x0.y, x0.z + d}, w) - h({x0.x, x0.y, x0.z - d}, w)) / (2 * d);
    rep.wgradh_sup = std::max(rep.wgradh_sup, std::abs(w.x * gx + w.y * gy + w.z * gz));
    rep.aniso_sup = std::max(rep.aniso_sup, std::abs(h(x0, w) - hbar(x0)));
    if (!have_c0) {
      C0 = h(x0, w);
      have_c0 = true;
    }
    rep.const_dev = std::max(rep.const_dev, std::abs(h(x0, w) - C0));
  };
  for (int b = 0; b < n_boundary; ++b) {
    if (planar) {
      double th = 2.0 * kPi * b / n_boundary;
      Vec3 x0{geom.R * std::cos(th), geom.R * std::sin(th), 0.0};
      Vec3 nu = normalized(x0);
      for (int m = 0; m < n_ordinate; ++m) {
        double a = (m + 0.5) * 2.0 * kPi / n_ordinate;
        visit(x0, nu, {std::cos(a), std::sin(a), 0.0});
      }
    } else {
      double th = kPi * (b + 0.5) / n_boundary;
      Vec3 x0{geom.R * std::sin(th), 0.0, geom.R * std::cos(th)};
      Vec3 nu = normalized(x0);
      int npol = std::max(4, n_ordinate / 4);
      for (int i = 0; i < npol; ++i) {
        double mu = -1.0 + (i + 0.5) * 2.0 / npol;
        double st = std::sqrt(1.0 - mu * mu);
        for (int j = 0; j < 8; ++j) {
          double az = (j + 0.5) * kPi / 4.0;
          visit(x0, nu, {st * std::cos(az), st * std::sin(az), mu});
        }
      }
    }
  }
  rep.basic_ok = rep.basic_sup < tol;
  rep.improved_ok = rep.basic_ok && rep.dtg_sup < tol && rep.wgradh_sup < tol &&
                    rep.aniso_sup < tol && rep.const_dev < tol;
  rep.layers_vanish_licensed = rep.improved_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Composite evaluation and error norms.
// ---------------------------------------------------------------------------

double Composite::eval(double t, const Vec3& x, const Vec3& w) const {
  double v = U0(t, x);
  if (order >= 1) v += eps * (U1bar(x) - dot(w, grad_U0(t, x)));
  if (stack) {
    double rr = geom.kind == geometry::Kind::Ball ? norm(x) : std::hypot(x.x, x.y);
    double mu = geom.R - rr;
    if (mu < geom.collar_width() && rr > 0.0) {
      geometry::LayerCoordinates c = geometry::to_layer_coords(geom, x, w, eps);
      double io = geom.kind == geometry::Kind::Ball ? 0.0 : c.iota1;
      v += stack->layer0(io, c.eta, c.phi, c.psi);
      if (order >= 1) v += eps * stack->layer1(io, c.eta, c.phi, c.psi);
    }
  }
  if (unsteady && init) v += init->eval(t / (eps * eps), x, w, eps);
  return v;
}

ErrorNorms error_norms_full(const transport::DiskFullSolution& ref, const Composite& comp,
                            double collar_cut, double t) {
  const transport::DiskGrid& g = ref.grid;
  ErrorNorms n;
  double l2 = 0.0;
  int na = g.nalpha;
  double dth = 2.0 * kPi / g.ntheta, dw = 2.0 * kPi / na;
  for (int i = 0; i < g.nr(); ++i) {
    double rlo = i > 0 ? 0.5 * (g.r[i - 1] + g.r[i]) : g.r[0];
    double rhi = i + 1 < g.nr() ? 0.5 * (g.r[i] + g.r[i + 1]) : g.r[i];
    double ring = 0.5 * (rhi * rhi - rlo * rlo);  // per unit theta
    bool interior = (comp.geom.R - g.r[i]) >= collar_cut;
    int jmax = (g.has_center() && i == 0) ? 1 : g.ntheta;
    for (int j = 0; j < jmax; ++j) {
      Vec3 x = g.node(i, j);
      double vol = (g.has_center() && i == 0) ? kPi * rhi * rhi : ring * dth;
      for (int m = 0; m < na; ++m) {
        double diff = std::abs(ref.value(g.sid(i, j), m) - comp.eval(t, x, g.ordinate(m)));
        n.linf = std::max(n.linf, diff);
        if (interior) {
          n.linf_interior = std::max(n.linf_interior, diff);
          ++n.interior_count;
        }
        l2 += diff * diff * vol * dw;
      }
    }
  }
  n.l2 = std::sqrt(l2);
  return n;
}

namespace {

template <class ValueAt>
ErrorNorms norms_modal_impl(const transport::ModalGrid& g, const Composite& comp,
                            double collar_cut, int ntheta_sample, double t, ValueAt&& value) {
  ErrorNorms n;
  double l2 = 0.0;
  int na = g.nalpha;
  double dth = 2.0 * kPi / ntheta_sample, dw = 2.0 * kPi / na;
  for (int i = 0; i < g.nr(); ++i) {
    double rlo = i > 0 ? 0.5 * (g.r[i - 1] + g.r[i]) : g.r[0];
    double rhi = i + 1 < g.nr() ? 0.5 * (g.r[i] + g.r[i + 1]) : g.r[i];
    double ring = 0.5 * (rhi * rhi - rlo * rlo);
    bool interior = (comp.geom.R - g.r[i]) >= collar_cut;
    for (int q = 0; q < ntheta_sample; ++q) {
      double th = 2.0 * kPi * q / ntheta_sample;
      Vec3 x{g.r[i] * std::cos(th), g.r[i] * std::sin(th), 0.0};
      for (int m = 0; m < na; ++m) {
        double aw = g.alpha(m) + th;
        Vec3 w{std::cos(aw), std::sin(aw), 0.0};
        double diff = std::abs(value(i, m, th) - comp.eval(t, x, w));
        n.linf = std::max(n.linf, diff);
        if (interior) {
          n.linf_interior = std::max(n.linf_interior, diff);
          ++n.interior_count;
        }
        l2 += diff * diff * ring * dth * dw;
      }
    }
  }
  n.l2 = std::sqrt(l2);
  return n;
}

}  // namespace

ErrorNorms error_norms_modal(const transport::ModalSolution& ref, const Composite& comp,
                             double collar_cut, int ntheta_sample) {
  return norms_modal_impl(ref.grid, comp, collar_cut, ntheta_sample, 0.0,
                          [&](int i, int m, double th) { return ref.value(i, m, th); });
}

ErrorNorms error_norms_modal_level(const transport::ModalTrajectory& ref, int level,
                                   const Composite& comp, double collar_cut, int ntheta_sample) {
  return norms_modal_impl(ref.grid, comp, collar_cut, ntheta_sample, ref.times[level],
                          [&](int i, int m, double th) { return ref.value(level, i, m, th); });
}

// ---------------------------------------------------------------------------
// Convergence study.
// ---------------------------------------------------------------------------

namespace {

transport::ModalProblem modal_problem_from_datum(const geometry::Geometry& geom, double eps,
                                                 const BoundaryDatum& datum) {
  transport::ModalProblem mp;
  mp.geom = geom;
  mp.eps = eps;
  // Group terms by mode.
  std::vector<int> ks;
  for (const auto& t : datum.terms)
    if (std::find(ks.begin(), ks.end(), t.k) == ks.end()) ks.push_back(t.k);
  std::sort(ks.begin(), ks.end());
  for (int k : ks) {
    std::vector<DatumTerm> sel;
    for (const auto& t : datum.terms)
      if (t.k == k) sel.push_back(t);
    transport::ModeDatum md;
    md.k = k;
    md.p = [sel](const Vec3& x0, const Vec3& w) -> Cplx {
      // x0 is rotated to theta = 0: local frame nu = x0/|x0|, t1 = (-y,x)/|x0|.
      Vec3 nu = normalized(x0);
      Vec3 t1{-nu.y, nu.x, 0.0};
      double sphi = -dot(w, nu);
      if (sphi <= 0.0) return 0.0;
      double phi = std::asin(std::clamp(sphi, -1.0, 1.0));
      double psi = dot(w, t1) >= 0.0 ? kPi / 2.0 : -kPi / 2.0;
      Cplx acc = 0.0;
      for (const auto& t : sel) acc += t.c * t.p(phi, psi);
      return acc;
    };
    mp.data.push_back(std::move(md));
  }
  return mp;
}

double modal_selfcheck(const transport::ModalSolution& coarse,
                       const transport::ModalSolution& fine) {
  double worst = 0.0;
  for (size_t q = 0; q < coarse.ks.size(); ++q) {
    // match by mode
    size_t qf = q;
    for (size_t j = 0; j < fine.ks.size(); ++j)
      if (fine.ks[j] == coarse.ks[q]) qf = j;
    for (int i = 0; i < coarse.grid.nr(); ++i) {
      double r = coarse.grid.r[i];
      // interpolate fine ubar at r
      const auto& fr = fine.grid.r;
      int lo = 0, hi = (int)fr.size() - 1;
      while (hi - lo > 1) {
        int mid = (lo + hi) / 2;
        (fr[mid] <= r ? lo : hi) = mid;
      }
      double t = (r - fr[lo]) / (fr[lo + 1] - fr[lo]);
      Cplx vf = fine.ubar[qf][lo] * (1.0 - t) + fine.ubar[qf][lo + 1] * t;
      worst = std::max(worst, std::abs(vf - coarse.ubar[q][i]));
    }
  }
  return worst;
}

}  // namespace

ConvergenceReport convergence_study(const StudyConfig& cfg) {
  if (cfg.eps_list.size() < 3)
    throw std::invalid_argument("convergence_study: need at least 3 epsilon values");
  ConvergenceReport rep;
  geometry::Geometry geom = geometry::Geometry::disk(cfg.R);
  int kmax_fit = std::max(4, cfg.datum.max_mode() + 2);

  for (double eps : cfg.eps_list) {
    // Reference solve (theta-harmonic) plus a refined self-check.
    transport::ModalProblem mp = modal_problem_from_datum(geom, eps, cfg.datum);
    transport::ModalGrid mg;
    mg.r = boundary_refined_radii(0.0, cfg.R, cfg.ref_nr_core, eps / cfg.ref_drmin_factor);
    mg.nalpha = cfg.ref_nalpha;
    transport::SolveOptions topt = cfg.transport_solve;
    topt.threads = cfg.threads;
    transport::ModalSolution ref = transport::solve_steady_modal(mp, mg, topt);
    transport::ModalGrid mg_fine;
    mg_fine.r = boundary_refined_radii(0.0, cfg.R, (int)(cfg.ref_nr_core * cfg.refine_factor),
                                       eps / (2.0 * cfg.ref_drmin_factor));
    mg_fine.nalpha = (int)(cfg.ref_nalpha * 1.5);
    transport::ModalSolution ref_fine = transport::solve_steady_modal(mp, mg_fine, topt);
    double selfcheck = modal_selfcheck(ref, ref_fine);

    for (int variant = 0; variant < (cfg.flat_pair ? 2 : 1); ++variant) {
      StackOptions sopt;
      sopt.n_boundary_nodes = cfg.boundary_nodes;
      sopt.order = cfg.order;
      sopt.flat = variant == 1;
      sopt.n_eta = cfg.milne_n_eta;
      sopt.n_phi = cfg.milne_n_phi;
      sopt.solve = cfg.milne_solve;
      sopt.solve.threads = cfg.threads;
      LayerStack stack = build_layer_stack(geom, eps, cfg.datum, sopt);
      fluid::DiskHarmonic U0 =
          fluid::DiskHarmonic::fit(cfg.R, [&](double th) { return stack.boundary_D(th); }, kmax_fit);
      Composite comp;
      comp.geom = geom;
      comp.eps = eps;
      comp.order = cfg.order;
      comp.stack = &stack;
      comp.U0 = [&U0](double, const Vec3& x) { return U0.eval(x); };
      fluid::InteriorCorrector corr;
      if (cfg.order >= 1) {
        add_first_order(stack, U0);
        corr = fluid::make_corrector(
            U0, [&](double th) { return trig_eval(stack.F1L_modes, th); }, kmax_fit);
        comp.grad_U0 = [&U0](double, const Vec3& x) { return U0.grad(x); };
        comp.U1bar = [corr](const Vec3& x) { return corr.U1bar.eval(x); };
      }
      ErrorNorms norms = error_norms_modal(ref, comp, cfg.collar_factor * eps);
      StudyRow row;
      row.eps = eps;
      row.variant = variant == 0 ? "geometric" : "flat";
      row.linf = norms.linf;
      row.l2 = norms.l2;
      row.linf_interior = norms.linf_interior;
      row.ref_selfcheck = selfcheck;
      row.ref_nr = mg.nr();
      row.ref_nalpha = mg.nalpha;
      row.flagged = selfcheck > 0.5 * std::max(norms.linf_interior, 1e-14);
      rep.rows.push_back(row);
    }
  }

  std::vector<double> xs, ys;
  double maxerr = 0.0;
  for (const auto& r : rep.rows) {
    rep.any_flagged = rep.any_flagged || r.flagged;
    if (r.variant == "geometric") {
      maxerr = std::max(maxerr, r.linf_interior);
      if (!r.flagged && r.linf_interior > 0.0) {
        xs.push_back(std::log(r.eps));
        ys.push_back(std::log(r.linf_interior));
      }
    }
  }
  double floor = 100.0 * std::max(cfg.milne_solve.tol, cfg.transport_solve.tol);
  if (maxerr < floor) {
    rep.degenerate = true;
    return rep;
  }
  if (xs.size() >= 3) {
    LineFit fit = fit_line(xs, ys);
    rep.slope = fit.slope;
    double ssx = 0.0, xbar = 0.0, ssres = 0.0;
    for (double x : xs) xbar += x;
    xbar /= xs.size();
    for (size_t i = 0; i < xs.size(); ++i) {
      ssx += (xs[i] - xbar) * (xs[i] - xbar);
      double f = fit.intercept + fit.slope * xs[i];
      ssres += (ys[i] - f) * (ys[i] - f);
    }
    if (xs.size() > 2 && ssx > 0.0)
      rep.slope_stderr = std::sqrt(ssres / (xs.size() - 2) / ssx);
  }
  return rep;
}

}  // namespace kinlab::asymptotics

// ---------------------------------------------------------------------------
// Layer-stack cache.
// ---------------------------------------------------------------------------

namespace kinlab::asymptotics {

namespace {

void fnv_mix(std::uint64_t& h, const void* data, size_t n) {
  const unsigned char* p = (const unsigned char*)data;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

void fnv_double(std::uint64_t& h, double v) { fnv_mix(h, &v, sizeof v); }

}  // namespace

std::string stack_cache_key(const geometry::Geometry& geom, double eps,
                            const BoundaryDatum& datum, const StackOptions& opt) {
  std::uint64_t h = 1469598103934665603ULL;
  fnv_double(h, (double)(int)geom.kind);
  fnv_double(h, geom.R);
  fnv_double(h, geom.R_in);
  fnv_double(h, eps);
  fnv_double(h, opt.n_boundary_nodes);
  fnv_double(h, opt.order);
  fnv_double(h, opt.alpha);
  fnv_double(h, opt.flat ? 1.0 : 0.0);
  fnv_double(h, opt.decompose ? 1.0 : 0.0);
  fnv_double(h, opt.n_eta);
  fnv_double(h, opt.n_phi);
  fnv_double(h, opt.n_psi);
  fnv_double(h, opt.L_exponent);
  fnv_double(h, opt.solve.tol);
  // Content fingerprint of the datum on a fixed sample set.
  for (int b = 0; b < 7; ++b)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 3; ++k)
        fnv_double(h, datum.eval(2.0 * kPi * b / 7.0, 0.05 + 1.5 * j / 5.0, -kPi + 2 * kPi * k / 3.0));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

namespace {

void put_vec(std::ofstream& f, const std::vector<double>& v) {
  std::uint64_t n = v.size();
  f.write((const char*)&n, sizeof n);
  f.write((const char*)v.data(), n * sizeof(double));
}

bool get_vec(std::ifstream& f, std::vector<double>& v) {
  std::uint64_t n = 0;
  f.read((char*)&n, sizeof n);
  if (!f || n > (1ULL << 32)) return false;
  v.resize(n);
  f.read((char*)v.data(), n * sizeof(double));
  return (bool)f;
}

void put_cvec(std::ofstream& f, const std::vector<Cplx>& v) {
  std::uint64_t n = v.size();
  f.write((const char*)&n, sizeof n);
  f.write((const char*)v.data(), n * sizeof(Cplx));
}

bool get_cvec(std::ifstream& f, std::vector<Cplx>& v) {
  std::uint64_t n = 0;
  f.read((char*)&n, sizeof n);
  if (!f || n > (1ULL << 32)) return false;
  v.resize(n);
  f.read((char*)v.data(), n * sizeof(Cplx));
  return (bool)f;
}

constexpr std::uint64_t kStackMagic = 0x6b6c53746b303202ULL;

}  // namespace

bool save_layer_stack(const LayerStack& st, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) return false;
  f.write((const char*)&kStackMagic, sizeof kStackMagic);
  std::uint64_t meas = st.grid.measure == milne::Measure::S2 ? 2 : 1;
  f.write((const char*)&meas, sizeof meas);
  put_vec(f, st.grid.eta);
  put_vec(f, st.grid.phi);
  put_vec(f, st.grid.wphi);
  put_vec(f, st.grid.psi);
  put_vec(f, st.grid.wpsi);
  put_vec(f, st.iota);
  std::uint64_t nb = st.nodes.size();
  f.write((const char*)&nb, sizeof nb);
  for (const auto& n : st.nodes) {
    double scal[8] = {n.F0L_reg,      n.F0L_sing,        n.F1L,       n.deco.lambda,
                      n.deco.alpha,   n.deco.matching_residual, n.deco.gmin, n.deco.gmax};
    f.write((const char*)scal, sizeof scal);
    put_vec(f, n.reg0.f);
    put_vec(f, n.sing0.f);
  }
  std::uint64_t nm = st.modes0.size();
  f.write((const char*)&nm, sizeof nm);
  for (const auto& m : st.modes0) put_cvec(f, m);
  std::uint64_t nm1 = st.modes1.size();
  f.write((const char*)&nm1, sizeof nm1);
  for (const auto& m : st.modes1) put_cvec(f, m);
  put_cvec(f, st.D_modes);
  put_cvec(f, st.F1L_modes);
  put_cvec(f, st.gn_modes);
  put_cvec(f, st.gt_modes);
  return (bool)f;
}

bool load_layer_stack(LayerStack& st, const std::string& path, const geometry::Geometry& geom,
                      double eps, const BoundaryDatum& datum, const StackOptions& opt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  std::uint64_t magic = 0, meas = 0, nb = 0, nm = 0, nm1 = 0;
  f.read((char*)&magic, sizeof magic);
  if (magic != kStackMagic) return false;
  st.geom = geom;
  st.eps = eps;
  st.opt = opt;
  st.datum = datum;
  f.read((char*)&meas, sizeof meas);
  st.grid.measure = meas == 2 ? milne::Measure::S2 : milne::Measure::S1;
  if (!get_vec(f, st.grid.eta) || !get_vec(f, st.grid.phi) || !get_vec(f, st.grid.wphi) ||
      !get_vec(f, st.grid.psi) || !get_vec(f, st.grid.wpsi) || !get_vec(f, st.iota))
    return false;
  f.read((char*)&nb, sizeof nb);
  if (!f || nb > 4096) return false;
  st.nodes.assign(nb, {});
  for (auto& n : st.nodes) {
    double scal[8];
    f.read((char*)scal, sizeof scal);
    n.F0L_reg = scal[0];
    n.F0L_sing = scal[1];
    n.F1L = scal[2];
    n.deco.lambda = scal[3];
    n.deco.alpha = scal[4];
    n.deco.matching_residual = scal[5];
    n.deco.gmin = scal[6];
    n.deco.gmax = scal[7];
    n.reg0.grid = st.grid;
    n.sing0.grid = st.grid;
    n.reg0.f_L = n.F0L_reg;
    n.sing0.f_L = n.F0L_sing;
    if (!get_vec(f, n.reg0.f) || !get_vec(f, n.sing0.f)) return false;
  }
  f.read((char*)&nm, sizeof nm);
  if (!f || nm > 4096) return false;
  st.modes0.assign(nm, {});
  for (auto& m : st.modes0)
    if (!get_cvec(f, m)) return false;
  f.read((char*)&nm1, sizeof nm1);
  if (!f || nm1 > 4096) return false;
  st.modes1.assign(nm1, {});
  for (auto& m : st.modes1)
    if (!get_cvec(f, m)) return false;
  if (!get_cvec(f, st.D_modes)) return false;
  if (!get_cvec(f, st.F1L_modes)) return false;
  if (!get_cvec(f, st.gn_modes)) return false;
  if (!get_cvec(f, st.gt_modes)) return false;
  return true;
}

LayerStack build_layer_stack_cached(const geometry::Geometry& geom, double eps,
                                    const BoundaryDatum& datum, const StackOptions& opt,
                                    const std::string& cache_dir) {
  if (cache_dir.empty()) return build_layer_stack(geom, eps, datum, opt);
  std::string path = cache_dir + "/stack-" + stack_cache_key(geom, eps, datum, opt) + ".bin";
  LayerStack st;
  if (load_layer_stack(st, path, geom, eps, datum, opt)) return st;
  st = build_layer_stack(geom, eps, datum, opt);
  std::filesystem::create_directories(cache_dir);
  save_layer_stack(st, path);
  return st;
}

}  // namespace kinlab::asymptotics

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <numbers>

#include "doctest.h"
#include "kinlab/asymptotics.hpp"
#include "kinlab/quadrature.hpp"

using namespace kinlab;
using namespace kinlab::asymptotics;

namespace {
constexpr double kPi = std::numbers::pi;

BoundaryDatum ramp_datum(double c0, double amp, double mode_amp) {
  BoundaryDatum d;
  DatumTerm base{c0, 0, [](double, double) { return 1.0; }};
  DatumTerm prof{amp, 0, [](double phi, double) { return phi > 0 ? phi / (kPi / 2) : 0.0; }};
  d.terms = {base, prof};
  if (mode_amp != 0.0) {
    DatumTerm m{amp * mode_amp, 1, [](double phi, double) { return phi > 0 ? phi / (kPi / 2) : 0.0; }};
    d.terms.push_back(m);
  }
  return d;
}
}  // namespace

TEST_CASE("smooth cutoffs: forced shapes and band bounds") {
  double eps = 0.1, alpha = 1.0;
  auto zero = [](double, double) { return 0.0; };
  Cutoffs c = smooth_cutoffs(zero, eps, alpha);
  double band = std::pow(eps, alpha);
  // g == 0: g1 == 0 everywhere; g2 descends from 1 to 0 across the band
  for (double phi : {0.01, 0.05, 0.12, 0.25, 1.0}) CHECK(c.g1(phi, 0.0) == 0.0);
  CHECK(c.g2(0.5 * band, 0.0) == 1.0);
  CHECK(c.g2(3.0 * band, 0.0) == 0.0);
  CHECK(c.g2(1.5 * band, 0.0) > 0.0);
  CHECK(c.g2(1.5 * band, 0.0) < 1.0);

  // outside the band both cutoffs equal g
  auto g = [](double phi, double psi) { return 0.3 + 0.5 * std::sin(phi) + 0.1 * std::cos(psi); };
  Cutoffs cg = smooth_cutoffs(g, eps, alpha);
  for (double phi : {3.0 * band, 0.7, 1.2}) {
    CHECK(cg.g1(phi, 0.4) == doctest::Approx(g(phi, 0.4)));
    CHECK(cg.g2(phi, 0.4) == doctest::Approx(g(phi, 0.4)));
  }

  // slope bound: max |d g_i / d phi| * eps^alpha <= 4 across epsilon values
  auto gp = [](double phi, double) { return phi > 0 ? phi / (kPi / 2) : 0.0; };
  for (double e : {0.1, 0.05, 0.025}) {
    Cutoffs cc = smooth_cutoffs(gp, e, 1.0);
    double b = e;
    double worst = 0.0;
    for (int i = 1; i < 2000; ++i) {
      double phi = 3.0 * b * i / 2000.0;
      double h = 1e-7 * b;
      worst = std::max(worst, std::abs(cc.g1(phi + h, 0) - cc.g1(phi - h, 0)) / (2 * h));
      worst = std::max(worst, std::abs(cc.g2(phi + h, 0) - cc.g2(phi - h, 0)) / (2 * h));
    }
    CHECK(worst * b <= 4.0);
  }
}

TEST_CASE("boundary-data decomposition: lambda, identity, support, certificates") {
  double eps = 0.1;
  milne::LayerGeometry lg{eps, 1.0, 1.0, true};
  milne::Grid grid = milne::Grid::make(milne::Measure::S2, std::pow(eps, -0.5), 80, 48, 4);
  auto g = [](double phi, double) { return phi > 0 ? phi / (kPi / 2) : 0.0; };
  milne::SolveOptions opt;
  opt.tol = 1e-9;
  DataDecomposition d = decompose_boundary_data(g, lg, grid, 1.0, opt);
  CHECK(d.lambda_in_01);
  CHECK(d.lambda > 0.0);
  CHECK(d.lambda < 1.0);
  CHECK(d.matching_residual < 1e-6);
  CHECK(d.grazing_eta_derivative < 10.0 * opt.tol);
  // identity and support of the singular part
  double band = std::pow(eps, 1.0);
  for (double phi : {0.2 * band, band, 1.7 * band, 2.5 * band, 0.4, 1.0})
    for (double psi : {0.0, 1.2}) {
      CHECK(d.regular(phi, psi) + d.singular(phi, psi) == doctest::Approx(g(phi, psi)).epsilon(1e-12));
      if (phi >= 2.0 * band) CHECK(std::abs(d.singular(phi, psi)) < 1e-14);
    }
  // constant datum: degenerate decomposition
  DataDecomposition dc = decompose_boundary_data([](double, double) { return 2.0; }, lg, grid, 1.0, opt);
  CHECK(dc.degenerate_constant);
  CHECK(dc.regular(0.3, 0.0) == doctest::Approx(2.0));
  CHECK(dc.singular(0.3, 0.0) == 0.0);
}

TEST_CASE("initial layer closed forms") {
  InitialLayer il;
  il.order = 0;
  il.h = [](const Vec3&, const Vec3& w) { return w.x; };
  il.hbar = [](const Vec3&) { return 0.0; };
  Vec3 x{0.3, 0.1, 0.0};
  Vec3 w{0.8, 0.6, 0.0};
  CHECK(il.eval(0.0, x, w, 0.1) == doctest::Approx(w.x));           // tau = 0: h - hbar
  CHECK(il.eval(2.0, x, w, 0.1) == doctest::Approx(std::exp(-2.0) * w.x));
  CHECK(std::abs(il.eval(40.0, x, w, 0.1)) < 1e-17);
  InitialLayer iso;
  iso.order = 0;
  iso.h = [](const Vec3&, const Vec3&) { return 1.7; };
  iso.hbar = [](const Vec3&) { return 1.7; };
  CHECK(iso.eval(0.5, x, w, 0.1) == 0.0);
}

TEST_CASE("compatibility report clauses") {
  geometry::Geometry disk = geometry::Geometry::disk(1.0);
  auto zero_dtg = [](const Vec3&, const Vec3&) { return 0.0; };
  // h == g == c: everything passes
  CompatibilityReport ok = compatibility_check(
      disk, [](const Vec3&, const Vec3&) { return 2.0; }, [](const Vec3&) { return 2.0; },
      [](double, const Vec3&, const Vec3&) { return 2.0; }, zero_dtg, 16, 16);
  CHECK(ok.basic_ok);
  CHECK(ok.improved_ok);
  CHECK(ok.layers_vanish_licensed);

  // h = w1, g = e^{-t} w1: basic passes at t=0, improved fails on anisotropy
  CompatibilityReport an = compatibility_check(
      disk, [](const Vec3&, const Vec3& w) { return w.x; }, [](const Vec3&) { return 0.0; },
      [](double t, const Vec3&, const Vec3& w) { return std::exp(-t) * w.x; },
      [](const Vec3&, const Vec3& w) { return -w.x; }, 16, 16);
  CHECK(an.basic_ok);
  CHECK(!an.improved_ok);
  CHECK(an.aniso_sup > 0.1);
  CHECK(an.dtg_sup > 0.1);

  // h = g(0) but d_t g(0) != 0: only that clause is flagged
  CompatibilityReport dt = compatibility_check(
      disk, [](const Vec3&, const Vec3&) { return 1.0; }, [](const Vec3&) { return 1.0; },
      [](double t, const Vec3&, const Vec3&) { return 1.0 + t; },
      [](const Vec3&, const Vec3&) { return 1.0; }, 16, 16);
  CHECK(dt.basic_ok);
  CHECK(!dt.improved_ok);
  CHECK(dt.dtg_sup == doctest::Approx(1.0));
  CHECK(dt.aniso_sup < 1e-12);
}

TEST_CASE("layer stack: constants collapse, rotation invariance, composite consistency") {
  geometry::Geometry disk = geometry::Geometry::disk(1.0);
  double eps = 0.1;
  StackOptions opt;
  opt.n_boundary_nodes = 8;
  opt.n_eta = 100;
  opt.n_phi = 32;
  opt.solve.tol = 1e-9;

  // isotropic constant datum: both layers vanish, D = c
  BoundaryDatum cst;
  cst.terms = {{3.0, 0, [](double, double) { return 1.0; }}};
  LayerStack sc = build_layer_stack(disk, eps, cst, opt);
  CHECK(sc.boundary_D(1.1) == doctest::Approx(3.0).epsilon(1e-8));
  for (double eta : {0.0, 0.5, 2.0})
    for (double phi : {-1.2, -0.3, 0.4, 1.3})
      CHECK(std::abs(sc.layer0(0.7, eta, phi, kPi / 2)) < 1e-7);

  // rotation-invariant datum: identical layers at every node
  BoundaryDatum rot = ramp_datum(0.5, 1.0, 0.0);
  LayerStack sr = build_layer_stack(disk, eps, rot, opt);
  for (size_t b = 1; b < sr.nodes.size(); ++b) {
    CHECK(sr.nodes[b].F0L_reg == doctest::Approx(sr.nodes[0].F0L_reg).epsilon(1e-10));
    double worst = 0.0;
    for (size_t q = 0; q < sr.nodes[b].reg0.f.size(); ++q)
      worst = std::max(worst, std::abs(sr.nodes[b].reg0.f[q] - sr.nodes[0].reg0.f[q]));
    CHECK(worst < 1e-10);
  }
  // lambda identical across nodes and inside (0,1)
  for (const auto& n : sr.nodes) {
    CHECK(n.deco.lambda_in_01);
    CHECK(n.deco.lambda == doctest::Approx(sr.nodes[0].deco.lambda).epsilon(1e-12));
  }

  // composite of constant data is the constant
  Composite comp;
  comp.geom = disk;
  comp.eps = eps;
  comp.order = 0;
  comp.stack = &sc;
  comp.U0 = [](double, const Vec3&) { return 3.0; };
  for (double r : {0.0, 0.5, 0.93, 0.999})
    for (double a : {0.3, 2.0, 4.0}) {
      Vec3 x{r, 0.02, 0.0};
      Vec3 w{std::cos(a), std::sin(a), 0.0};
      CHECK(comp.eval(0.0, x, w) == doctest::Approx(3.0).epsilon(1e-7));
    }
}

TEST_CASE("composite matches the datum on the in-flow boundary") {
  geometry::Geometry disk = geometry::Geometry::disk(1.0);
  double eps = 0.1;
  StackOptions opt;
  opt.n_boundary_nodes = 12;
  opt.n_eta = 120;
  opt.n_phi = 40;
  opt.solve.tol = 1e-9;
  BoundaryDatum datum = ramp_datum(0.5, 1.0, 0.5);
  LayerStack st = build_layer_stack(disk, eps, datum, opt);
  fluid::DiskHarmonic U0 =
      fluid::DiskHarmonic::fit(1.0, [&](double th) { return st.boundary_D(th); }, 5);
  Composite comp;
  comp.geom = disk;
  comp.eps = eps;
  comp.order = 0;
  comp.stack = &st;
  comp.U0 = [&U0](double, const Vec3& x) { return U0.eval(x); };
  double worst = 0.0;
  for (int b = 0; b < 24; ++b) {
    double th = 2 * kPi * b / 24.0;
    Vec3 x0{std::cos(th), std::sin(th), 0.0};
    Vec3 nu = x0;
    Vec3 t1{-nu.y, nu.x, 0.0};
    for (int m = 0; m < 32; ++m) {
      double a = (m + 0.5) * 2 * kPi / 32;
      Vec3 w{std::cos(a), std::sin(a), 0.0};
      double sphi = -dot(w, nu);
      if (sphi <= 1e-6) continue;
      double phi = std::asin(std::clamp(sphi, -1.0, 1.0));
      double psi = dot(w, t1) >= 0 ? kPi / 2 : -kPi / 2;
      worst = std::max(worst, std::abs(comp.eval(0.0, x0, w) - datum.eval(th, phi, psi)));
    }
  }
  CHECK(worst < 10.0 * opt.solve.tol);

  // layer decay transfer: the stored layer is small beyond L/2
  double L = st.grid.L();
  double tail = 0.0, scale = 0.0;
  for (double eta : {0.0, 0.2, 0.5, 1.0}) scale = std::max(scale, std::abs(st.layer0(0.0, eta, 0.35, kPi / 2)));
  for (double eta = L / 2; eta < L; eta += L / 20)
    tail = std::max(tail, std::abs(st.layer0(0.0, eta, 0.35, kPi / 2)));
  CHECK(tail < scale * std::exp(-0.2 * L / 2) * 10.0);
}

TEST_CASE("order-1 layer: cascade of zeros for constant interior") {
  geometry::Geometry disk = geometry::Geometry::disk(1.0);
  StackOptions opt;
  opt.n_boundary_nodes = 6;
  opt.n_eta = 80;
  opt.n_phi = 24;
  opt.order = 1;
  BoundaryDatum cst;
  cst.terms = {{2.0, 0, [](double, double) { return 1.0; }}};
  LayerStack st = build_layer_stack(disk, 0.1, cst, opt);
  fluid::DiskHarmonic U0 = fluid::DiskHarmonic::constant(1.0, 2.0);
  add_first_order(st, U0);
  // U0 constant and layer0 == 0: datum and source vanish, so layer1 == 0
  for (double eta : {0.0, 0.4, 1.5})
    for (double phi : {-0.9, 0.2, 1.1})
      CHECK(std::abs(st.layer1(0.3, eta, phi, kPi / 2)) < 1e-7);
}

TEST_CASE("error norms vanish when the composite is the reference") {
  geometry::Geometry disk = geometry::Geometry::disk(1.0);
  // rotation-invariant composite evaluated as a fake modal reference
  double eps = 0.1;
  StackOptions opt;
  opt.n_boundary_nodes = 4;
  opt.n_eta = 60;
  opt.n_phi = 24;
  BoundaryDatum cst;
  cst.terms = {{1.5, 0, [](double, double) { return 1.0; }}};
  LayerStack st = build_layer_stack(disk, eps, cst, opt);
  Composite comp;
  comp.geom = disk;
  comp.eps = eps;
  comp.stack = &st;
  comp.U0 = [](double, const Vec3&) { return 1.5; };

  transport::ModalSolution fake;
  fake.grid.r = {0.0, 0.25, 0.5, 0.75, 0.9, 1.0};
  fake.grid.nalpha = 12;
  fake.ks = {0};
  fake.u.resize(1);
  fake.u[0].assign(fake.grid.nr() * 12, 0.0);
  for (int i = 0; i < fake.grid.nr(); ++i)
    for (int m = 0; m < 12; ++m) {
      double a = fake.grid.alpha(m);
      Vec3 x{fake.grid.r[i], 0.0, 0.0};
      fake.u[0][(size_t)i * 12 + m] = comp.eval(0.0, x, {std::cos(a), std::sin(a), 0.0});
    }
  ErrorNorms n = error_norms_modal(fake, comp, 10.0 * eps, 16);
  CHECK(n.linf < 1e-12);
  CHECK(n.l2 < 1e-12);
  CHECK(n.interior_count > 0);
}

TEST_CASE("layer-stack cache: save, load, identical evaluation") {
  geometry::Geometry disk = geometry::Geometry::disk(1.0);
  StackOptions opt;
  opt.n_boundary_nodes = 6;
  opt.n_eta = 60;
  opt.n_phi = 24;
  BoundaryDatum datum = ramp_datum(0.3, 0.8, 0.4);
  std::string dir = "cache_test_dir";
  LayerStack a = build_layer_stack_cached(disk, 0.1, datum, opt, dir);
  LayerStack b = build_layer_stack_cached(disk, 0.1, datum, opt, dir);  // from disk
  for (double io : {0.0, 1.3})
    for (double eta : {0.0, 0.3, 1.2})
      for (double phi : {-0.8, 0.01, 0.9}) {
        CHECK(a.layer0(io, eta, phi, kPi / 2) == b.layer0(io, eta, phi, kPi / 2));
        CHECK(a.boundary_D(io) == b.boundary_D(io));
      }
  // a different datum misses the cache
  BoundaryDatum other = ramp_datum(0.3, 0.9, 0.4);
  CHECK(stack_cache_key(disk, 0.1, datum, opt) != stack_cache_key(disk, 0.1, other, opt));
}

TEST_CASE("order-1 composite: interior error reported against order 0") {
  // Reported, not asserted: the first-order terms should not hurt the
  // interior error on the smooth study family.
  geometry::Geometry disk = geometry::Geometry::disk(1.0);
  double eps = 0.05;
  BoundaryDatum datum = ramp_datum(0.5, 1.0, 0.5);

  transport::ModalProblem mp;
  mp.geom = disk;
  mp.eps = eps;
  for (int k : {0, 1}) {
    transport::ModeDatum d;
    d.k = k;
    double amp = k == 0 ? 1.0 : 0.5;
    double c0 = k == 0 ? 0.5 : 0.0;
    d.p = [amp, c0](const Vec3& x0, const Vec3& w) -> std::complex<double> {
      Vec3 nu = normalized(x0);
      double sphi = -dot(w, nu);
      if (sphi <= 0) return c0;
      return c0 + amp * std::asin(std::clamp(sphi, -1.0, 1.0)) / (kPi / 2);
    };
    mp.data.push_back(d);
  }
  transport::ModalGrid mg;
  mg.r = boundary_refined_radii(0.0, 1.0, 64, eps / 64.0);
  mg.nalpha = 128;
  transport::SolveOptions topt;
  topt.tol = 1e-9;
  transport::ModalSolution ref = transport::solve_steady_modal(mp, mg, topt);

  StackOptions so;
  so.n_boundary_nodes = 16;
  so.n_phi = 96;
  so.order = 1;
  so.solve.tol = 1e-9;
  LayerStack st = build_layer_stack(disk, eps, datum, so);
  fluid::DiskHarmonic U0 =
      fluid::DiskHarmonic::fit(1.0, [&](double th) { return st.boundary_D(th); }, 5);
  Composite c0comp;
  c0comp.geom = disk;
  c0comp.eps = eps;
  c0comp.order = 0;
  c0comp.stack = &st;
  c0comp.U0 = [&U0](double, const Vec3& x) { return U0.eval(x); };
  ErrorNorms n0 = error_norms_modal(ref, c0comp, 10.0 * eps);

  add_first_order(st, U0);
  fluid::InteriorCorrector corr = fluid::make_corrector(
      U0,
      [&st](double th) {
        double acc = 0.0;
        for (size_t k = 0; k < st.F1L_modes.size(); ++k)
          acc += (st.F1L_modes[k] * std::exp(std::complex<double>(0.0, (double)k * th))).real();
        return acc;
      },
      5);
  Composite c1comp = c0comp;
  c1comp.order = 1;
  c1comp.grad_U0 = [&U0](double, const Vec3& x) { return U0.grad(x); };
  c1comp.U1bar = [&corr](const Vec3& x) { return corr.U1bar.eval(x); };
  ErrorNorms n1 = error_norms_modal(ref, c1comp, 10.0 * eps);

  std::printf("order-0 interior L_inf = %.5f, order-1 interior L_inf = %.5f%s\n",
              n0.linf_interior, n1.linf_interior,
              n1.linf_interior <= n0.linf_interior ? "  (order 1 not worse)" : "  (order 1 worse)");
  CHECK(n1.linf_interior < 10.0 * n0.linf_interior);  // sanity only
}

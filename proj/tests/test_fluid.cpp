#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "kinlab/fluid.hpp"
#include "kinlab/quadrature.hpp"

using namespace kinlab;
using namespace kinlab::fluid;

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kJ01 = 2.404825557695773;  // first zero of J0
}

TEST_CASE("modal Laplace reproduces harmonic polynomials") {
  DiskHarmonic h1 = DiskHarmonic::fit(1.0, [](double th) { return std::cos(th); }, 8);
  DiskHarmonic h2 = DiskHarmonic::fit(1.0, [](double th) { return std::cos(2 * th); }, 8);
  DiskHarmonic hc = DiskHarmonic::fit(1.0, [](double) { return 4.2; }, 8);
  for (double r : {0.0, 0.3, 0.7, 0.95})
    for (double th : {0.0, 0.9, 2.8, -1.3}) {
      CHECK(std::abs(h1.eval(r, th) - r * std::cos(th)) < 1e-12);
      CHECK(std::abs(h2.eval(r, th) - r * r * std::cos(2 * th)) < 1e-10);
      CHECK(std::abs(hc.eval(r, th) - 4.2) < 1e-13);
    }
  // modes up to k = 8 at 1e-10
  for (int k = 1; k <= 8; ++k) {
    DiskHarmonic h = DiskHarmonic::fit(2.0, [k](double th) { return std::cos(k * th); }, 10);
    for (double r : {0.5, 1.4, 1.9})
      for (double th : {0.2, 1.1})
        CHECK(std::abs(h.eval(r, th) - std::pow(r / 2.0, k) * std::cos(k * th)) < 1e-10);
  }
}

TEST_CASE("modal gradient: linear harmonic has constant gradient") {
  DiskHarmonic h = DiskHarmonic::fit(1.0, [](double th) { return std::cos(th); }, 6);
  for (double r : {0.0, 0.4, 0.9})
    for (double th : {0.3, 2.0}) {
      Vec3 g = h.grad(r, th);
      CHECK(g.x == doctest::Approx(1.0).epsilon(1e-11));
      CHECK(std::abs(g.y) < 1e-11);
    }
  // finite-difference check on a higher mode
  DiskHarmonic h3 = DiskHarmonic::fit(1.0, [](double th) { return std::sin(3 * th); }, 8);
  double d = 1e-6;
  Vec3 x{0.5, 0.3, 0.0};
  Vec3 g = h3.grad(x);
  double fx = (h3.eval({x.x + d, x.y, 0}) - h3.eval({x.x - d, x.y, 0})) / (2 * d);
  double fy = (h3.eval({x.x, x.y + d, 0}) - h3.eval({x.x, x.y - d, 0})) / (2 * d);
  CHECK(g.x == doctest::Approx(fx).epsilon(1e-6));
  CHECK(g.y == doctest::Approx(fy).epsilon(1e-6));
}

TEST_CASE("FD fallback is second order and obeys the maximum principle") {
  auto D = [](double th) { return std::cos(th) + 0.4 * std::sin(2 * th); };
  DiskFdLaplace c = DiskFdLaplace::solve(1.0, 24, 48, D);
  DiskFdLaplace f = DiskFdLaplace::solve(1.0, 48, 96, D);
  DiskHarmonic exact = DiskHarmonic::fit(1.0, D, 8);
  double ec = 0.0, ef = 0.0, lo = 1e300, hi = -1e300;
  for (double r : {0.2, 0.5, 0.8})
    for (double th : {0.1, 1.0, 2.2, 4.0}) {
      ec = std::max(ec, std::abs(c.eval(r, th) - exact.eval(r, th)));
      ef = std::max(ef, std::abs(f.eval(r, th) - exact.eval(r, th)));
    }
  CHECK(ec / ef > 2.5);  // ~4 for second order
  for (int j = 0; j < 48; ++j) {
    lo = std::min(lo, D(2 * kPi * j / 48.0));
    hi = std::max(hi, D(2 * kPi * j / 48.0));
  }
  for (double v : c.u) {
    CHECK(v >= lo - 1e-9);
    CHECK(v <= hi + 1e-9);
  }
}

TEST_CASE("heat: constants persist") {
  HeatOptions opt;
  opt.nr = 64;
  opt.kmax = 2;
  DiskHeat h = DiskHeat::init(1.0, opt, [](double, double) { return 2.0; });
  for (int s = 0; s < 20; ++s) h.step(0.01, [](double) { return 2.0; });
  for (double r : {0.0, 0.5, 0.99})
    CHECK(h.eval(r, 1.0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("heat: Bessel mode decays at rate j01^2/3, not j01^2") {
  HeatOptions opt;
  opt.nr = 256;
  opt.kmax = 0;
  DiskHeat h = DiskHeat::init(1.0, opt, [](double r, double) { return std::cyl_bessel_j(0, kJ01 * r); });
  double t0 = 0.0, t1 = 0.4;
  int steps = 400;
  double u0 = h.eval(0.0, 0.0);
  for (int s = 0; s < steps; ++s) h.step((t1 - t0) / steps, [](double) { return 0.0; });
  double u1 = h.eval(0.0, 0.0);
  double rate = -std::log(u1 / u0) / (t1 - t0);
  double expected = kJ01 * kJ01 / 3.0;
  CHECK(std::abs(rate - expected) < 0.02 * expected);
  CHECK(std::abs(rate - 3.0 * expected) > 0.5 * expected);  // guards the unscaled equation
}

TEST_CASE("heat: steady states are conserved and transients reach laplace") {
  HeatOptions opt;
  opt.nr = 128;
  opt.kmax = 2;
  auto D = [](double th) { return 1.0 + 0.5 * std::cos(th); };
  DiskHarmonic steady = DiskHarmonic::fit(1.0, D, 4);
  DiskHeat h = DiskHeat::init(1.0, opt, [&](double r, double th) { return steady.eval(r, th); });
  for (int s = 0; s < 100; ++s) h.step(0.02, D);
  double drift = 0.0;
  for (double r : {0.0, 0.4, 0.9})
    for (double th : {0.0, 1.5, 3.0}) drift = std::max(drift, std::abs(h.eval(r, th) - steady.eval(r, th)));
  CHECK(drift < 1e-8);

  DiskHeat relax = DiskHeat::init(1.0, opt, [](double, double) { return 0.0; });
  double t = 0.0;
  while (t < 8.0) {
    relax.step(0.02, D);
    t += 0.02;
  }
  double err = 0.0;
  for (double r : {0.0, 0.4, 0.9})
    for (double th : {0.0, 1.5, 3.0}) err = std::max(err, std::abs(relax.eval(r, th) - steady.eval(r, th)));
  CHECK(err < 1e-6);
}

TEST_CASE("ball axisymmetric harmonic") {
  BallHarmonicAxi h = BallHarmonicAxi::fit(1.0, [](double mu) { return mu; }, 6);  // P1
  for (double r : {0.2, 0.7})
    for (double mu : {-0.8, 0.0, 0.5})
      CHECK(h.eval(r, mu) == doctest::Approx(r * mu).epsilon(1e-11));
  BallHarmonicAxi p2 = BallHarmonicAxi::fit(1.0, [](double mu) { return 1.5 * mu * mu - 0.5; }, 6);
  CHECK(p2.eval(0.6, 0.3) == doctest::Approx(0.36 * (1.5 * 0.09 - 0.5)).epsilon(1e-10));
}

TEST_CASE("interior corrector") {
  // U0 = c: w . grad U0 = 0, U1 = harmonic extension of f1L
  DiskHarmonic U0c = DiskHarmonic::constant(1.0, 3.0);
  InteriorCorrector c = make_corrector(U0c, [](double th) { return std::cos(th); }, 4);
  Vec3 w{0.6, 0.8, 0.0};
  CHECK(c.eval({0.5, 0.0, 0.0}, w) == doctest::Approx(0.5).epsilon(1e-10));
  // f1L = 0 and U0 = c: U1 = 0
  InteriorCorrector z = make_corrector(U0c, [](double) { return 0.0; }, 4);
  CHECK(std::abs(z.eval({0.3, 0.2, 0.0}, w)) < 1e-12);
  // U0 = r cos(theta): U1 = U1bar - w.e_x
  DiskHarmonic U0x = DiskHarmonic::fit(1.0, [](double th) { return std::cos(th); }, 4);
  InteriorCorrector cx = make_corrector(U0x, [](double) { return 0.0; }, 4);
  CHECK(cx.eval({0.4, 0.1, 0.0}, w) == doctest::Approx(-w.x).epsilon(1e-10));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "kinlab/quadrature.hpp"

using namespace kinlab;

TEST_CASE("gauss-legendre integrates polynomials exactly") {
  QuadRule q = gauss_legendre(6);
  double s = 0.0;
  for (int i = 0; i < 6; ++i) s += q.w[i] * std::pow(q.x[i], 10);
  CHECK(s == doctest::Approx(2.0 / 11.0).epsilon(1e-13));
  double tot = 0.0;
  for (double w : q.w) tot += w;
  CHECK(tot == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("gauss-legendre on [a,b] and cosine") {
  QuadRule q = gauss_legendre(16, -std::numbers::pi / 2, std::numbers::pi / 2);
  double s = 0.0;
  for (size_t i = 0; i < q.x.size(); ++i) s += q.w[i] * std::cos(q.x[i]);
  CHECK(std::abs(s - 2.0) < 1e-14);
}

TEST_CASE("graded wall grid covers [0,L] and refines toward 0") {
  auto eta = graded_wall_grid(3.2, 120);
  CHECK(eta.front() == 0.0);
  CHECK(eta.back() == doctest::Approx(3.2).epsilon(1e-14));
  CHECK(eta.size() == 121);
  for (size_t i = 1; i < eta.size(); ++i) CHECK(eta[i] > eta[i - 1]);
  double first = eta[1] - eta[0];
  double last = eta[eta.size() - 1] - eta[eta.size() - 2];
  CHECK(first < 0.3 * last);
}

TEST_CASE("boundary refined radii") {
  auto r = boundary_refined_radii(0.0, 1.0, 24, 0.01);
  CHECK(r.front() == 0.0);
  CHECK(r.back() == doctest::Approx(1.0));
  for (size_t i = 1; i < r.size(); ++i) CHECK(r[i] > r[i - 1]);
  double wlast = r[r.size() - 1] - r[r.size() - 2];
  CHECK(wlast <= 0.011);
}

TEST_CASE("smoothstep5 is a C^2 ramp") {
  CHECK(smoothstep5(-1.0) == 0.0);
  CHECK(smoothstep5(2.0) == 1.0);
  CHECK(smoothstep5(0.5) == doctest::Approx(0.5));
  double h = 1e-6;
  double slope = (smoothstep5(0.5 + h) - smoothstep5(0.5 - h)) / (2 * h);
  CHECK(slope == doctest::Approx(15.0 / 8.0).epsilon(1e-6));
}

TEST_CASE("line fit recovers slope and r2") {
  std::vector<double> x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back(i);
    y.push_back(3.0 - 2.0 * i);
  }
  LineFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(-2.0));
  CHECK(f.intercept == doctest::Approx(3.0));
  CHECK(f.r2 == doctest::Approx(1.0));
}

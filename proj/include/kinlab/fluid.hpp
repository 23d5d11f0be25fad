#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "kinlab/vec.hpp"

namespace kinlab::fluid {

// Harmonic function on the disk r <= R from Fourier boundary data:
// U = a0 + sum_k (r/R)^k (a_k cos k theta + b_k sin k theta).
struct DiskHarmonic {
  double R = 1.0;
  std::vector<double> a, b;  // b[0] unused

  // Trapezoid projection of D(theta); exact for trigonometric polynomials
  // up to the truncation.
  static DiskHarmonic fit(double R, const std::function<double(double)>& D, int kmax,
                          int nsamples = 0);
  static DiskHarmonic constant(double R, double c);

  double eval(double r, double theta) const;
  double eval(const Vec3& x) const;
  Vec3 grad(double r, double theta) const;
  Vec3 grad(const Vec3& x) const;
};

// Axisymmetric harmonic function on the ball from Legendre boundary data:
// U = sum_l c_l (r/R)^l P_l(cos theta).
struct BallHarmonicAxi {
  double R = 1.0;
  std::vector<double> c;

  static BallHarmonicAxi fit(double R, const std::function<double(double)>& D_of_costheta,
                             int lmax);
  double eval(double r, double costheta) const;
};

// Finite-difference fallback for pointwise Dirichlet data on the disk (SOR).
struct DiskFdLaplace {
  double R = 1.0;
  std::vector<double> r;      // nr+1 nodes, r[0]=0
  int ntheta = 0;
  std::vector<double> u;      // node 0 = center, then (i-1)*ntheta + j
  int iterations = 0;
  double residual = 0.0;

  static DiskFdLaplace solve(double R, int nr, int ntheta, const std::function<double(double)>& D,
                             double tol = 1e-11, int max_iter = 200000);
  double eval(double r, double theta) const;
};

struct HeatOptions {
  double kappa = 1.0 / 3.0;  // diffusivity of the interior equation
  int kmax = 8;
  int nr = 256;
};

// Heat equation d_t u = kappa Lap u on the disk: theta-Fourier modes with
// Crank-Nicolson radial steps.
struct DiskHeat {
  double R = 1.0;
  double kappa = 1.0 / 3.0;
  std::vector<double> r;  // uniform nodes
  int kmax = 0;
  std::vector<std::vector<std::complex<double>>> modes;  // [k][radial node]
  double time = 0.0;

  static DiskHeat init(double R, const HeatOptions& opt,
                       const std::function<double(double, double)>& u0);
  // One Crank-Nicolson step; D gives the Dirichlet datum at the new level.
  void step(double dt, const std::function<double(double)>& D);
  double eval(double r, double theta) const;
};

// First-order interior corrector U1(x, w) = U1bar(x) - w . grad U0(x), with
// U1bar the harmonic extension of the first-order Milne limits.
struct InteriorCorrector {
  DiskHarmonic U0;
  DiskHarmonic U1bar;

  double eval(const Vec3& x, const Vec3& w) const { return U1bar.eval(x) - dot(w, U0.grad(x)); }
};

InteriorCorrector make_corrector(const DiskHarmonic& U0, const std::function<double(double)>& f1L,
                                 int kmax);

}  // namespace kinlab::fluid

#include "kinlab/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "kinlab/linalg.hpp"
#include "kinlab/quadrature.hpp"

namespace kinlab::fluid {

namespace {
constexpr double kPi = std::numbers::pi;
}

DiskHarmonic DiskHarmonic::fit(double R, const std::function<double(double)>& D, int kmax,
                               int nsamples) {
  if (kmax < 0) throw std::invalid_argument("DiskHarmonic::fit: kmax < 0");
  int n = nsamples > 0 ? nsamples : std::max(4 * kmax + 16, 32);
  DiskHarmonic h;
  h.R = R;
  h.a.assign(kmax + 1, 0.0);
  h.b.assign(kmax + 1, 0.0);
  for (int j = 0; j < n; ++j) {
    double th = 2.0 * kPi * j / n;
    double v = D(th);
    h.a[0] += v / n;
    for (int k = 1; k <= kmax; ++k) {
      h.a[k] += 2.0 * v * std::cos(k * th) / n;
      h.b[k] += 2.0 * v * std::sin(k * th) / n;
    }
  }
  return h;
}

DiskHarmonic DiskHarmonic::constant(double R, double c) {
  DiskHarmonic h;
  h.R = R;
  h.a = {c};
  h.b = {0.0};
  return h;
}

double DiskHarmonic::eval(double r, double theta) const {
  double acc = a[0];
  double rho = r / R, rk = 1.0;
  for (size_t k = 1; k < a.size(); ++k) {
    rk *= rho;
    acc += rk * (a[k] * std::cos(k * theta) + b[k] * std::sin(k * theta));
  }
  return acc;
}

double DiskHarmonic::eval(const Vec3& x) const {
  return eval(std::hypot(x.x, x.y), std::atan2(x.y, x.x));
}

Vec3 DiskHarmonic::grad(double r, double theta) const {
  // d/dr and (1/r) d/dtheta; the k=1 mode stays regular at the center.
  double ur = 0.0, ut = 0.0;
  double rho = r / R, rk = 1.0;  // (r/R)^{k-1}
  for (size_t k = 1; k < a.size(); ++k) {
    double ck = std::cos(k * theta), sk = std::sin(k * theta);
    double amp = a[k] * ck + b[k] * sk;
    double damp = -a[k] * sk + b[k] * ck;
    ur += (double)k / R * rk * amp;
    ut += (double)k / R * rk * damp;
    rk *= rho;
  }
  double c = std::cos(theta), s = std::sin(theta);
  return {ur * c - ut * s, ur * s + ut * c, 0.0};
}

Vec3 DiskHarmonic::grad(const Vec3& x) const {
  return grad(std::hypot(x.x, x.y), std::atan2(x.y, x.x));
}

BallHarmonicAxi BallHarmonicAxi::fit(double R, const std::function<double(double)>& D,
                                     int lmax) {
  BallHarmonicAxi h;
  h.R = R;
  h.c.assign(lmax + 1, 0.0);
  QuadRule q = gauss_legendre(std::max(2 * lmax + 8, 16));
  for (int i = 0; i < (int)q.x.size(); ++i) {
    double mu = q.x[i], v = D(mu);
    double p0 = 1.0, p1 = mu;
    for (int l = 0; l <= lmax; ++l) {
      double pl = l == 0 ? 1.0 : (l == 1 ? mu : 0.0);
      if (l >= 2) {
        pl = ((2.0 * l - 1.0) * mu * p1 - (l - 1.0) * p0) / l;
        p0 = p1;
        p1 = pl;
      }
      h.c[l] += q.w[i] * v * pl * (2.0 * l + 1.0) / 2.0;
    }
  }
  return h;
}

double BallHarmonicAxi::eval(double r, double mu) const {
  double acc = 0.0, rho = r / R, rl = 1.0;
  double p0 = 1.0, p1 = mu;
  for (size_t l = 0; l < c.size(); ++l) {
    double pl;
    if (l == 0)
      pl = 1.0;
    else if (l == 1)
      pl = mu;
    else {
      pl = ((2.0 * l - 1.0) * mu * p1 - (l - 1.0) * p0) / l;
      p0 = p1;
      p1 = pl;
    }
    acc += c[l] * rl * pl;
    rl *= rho;
  }
  return acc;
}

DiskFdLaplace DiskFdLaplace::solve(double R, int nr, int ntheta,
                                   const std::function<double(double)>& D, double tol,
                                   int max_iter) {
  if (nr < 3 || ntheta < 4) throw std::invalid_argument("DiskFdLaplace: grid too small");
  DiskFdLaplace f;
  f.R = R;
  f.ntheta = ntheta;
  f.r.resize(nr + 1);
  for (int i = 0; i <= nr; ++i) f.r[i] = R * i / nr;
  double h = R / nr, dth = 2.0 * kPi / ntheta;
  auto id = [&](int i, int j) { return 1 + (size_t)(i - 1) * ntheta + (size_t)((j + ntheta) % ntheta); };
  f.u.assign(1 + (size_t)nr * ntheta, 0.0);  // includes the boundary ring
  for (int j = 0; j < ntheta; ++j) f.u[id(nr, j)] = D(j * dth);

  double omega = 1.7;
  for (int it = 0; it < max_iter; ++it) {
    double maxupd = 0.0;
    // center: Lap u(0) ~ 4 (mean of first ring - u0) / h^2
    double ring = 0.0;
    for (int j = 0; j < ntheta; ++j) ring += f.u[id(1, j)];
    ring /= ntheta;
    double upd = ring - f.u[0];
    f.u[0] += omega * upd;
    maxupd = std::max(maxupd, std::abs(upd));
    for (int i = 1; i < nr; ++i) {
      double ri = f.r[i];
      double cr = 1.0 / (h * h), ct = 1.0 / (ri * ri * dth * dth);
      double cp = cr + 1.0 / (2.0 * ri * h), cm = cr - 1.0 / (2.0 * ri * h);
      double diag = 2.0 * cr + 2.0 * ct;
      for (int j = 0; j < ntheta; ++j) {
        double up = f.u[id(i + 1, j)];
        double dn = i >= 2 ? f.u[id(i - 1, j)] : f.u[0];
        double lf = f.u[id(i, j - 1)], rt = f.u[id(i, j + 1)];
        double gs = (cp * up + cm * dn + ct * (lf + rt)) / diag;
        double du = gs - f.u[id(i, j)];
        f.u[id(i, j)] += omega * du;
        maxupd = std::max(maxupd, std::abs(du));
      }
    }
    f.iterations = it + 1;
    f.residual = maxupd;
    if (maxupd < tol) break;
  }
  return f;
}

double DiskFdLaplace::eval(double rr, double theta) const {
  int nr = (int)r.size() - 1;
  double h = R / nr, dth = 2.0 * kPi / ntheta;
  rr = std::clamp(rr, 0.0, R);
  double fi = rr / h;
  int i = std::min((int)fi, nr - 1);
  double ti = std::fmod(std::fmod(theta, 2.0 * kPi) + 2.0 * kPi, 2.0 * kPi) / dth;
  int j = std::min((int)ti, ntheta - 1);
  double tr = fi - i, tt = ti - j;
  auto val = [&](int ii, int jj) -> double {
    if (ii == 0) return u[0];
    return u[1 + (size_t)(ii - 1) * ntheta + (size_t)((jj + ntheta) % ntheta)];
  };
  return (1 - tr) * ((1 - tt) * val(i, j) + tt * val(i, j + 1)) +
         tr * ((1 - tt) * val(i + 1, j) + tt * val(i + 1, j + 1));
}

DiskHeat DiskHeat::init(double R, const HeatOptions& opt,
                        const std::function<double(double, double)>& u0) {
  DiskHeat hs;
  hs.R = R;
  hs.kappa = opt.kappa;
  hs.kmax = opt.kmax;
  hs.r.resize(opt.nr + 1);
  for (int i = 0; i <= opt.nr; ++i) hs.r[i] = R * i / opt.nr;
  int nth = std::max(4 * opt.kmax + 16, 32);
  hs.modes.assign(opt.kmax + 1, std::vector<std::complex<double>>(opt.nr + 1, 0.0));
  for (int i = 0; i <= opt.nr; ++i) {
    for (int j = 0; j < nth; ++j) {
      double th = 2.0 * kPi * j / nth;
      double v = u0(hs.r[i], th);
      for (int k = 0; k <= opt.kmax; ++k) {
        double scale = k == 0 ? 1.0 : 2.0;
        hs.modes[k][i] += scale * v * std::exp(std::complex<double>(0.0, -k * th)) / (double)nth;
      }
    }
  }
  return hs;
}

void DiskHeat::step(double dt, const std::function<double(double)>& D) {
  int n = (int)r.size() - 1;
  double h = r[1] - r[0];
  int nth = std::max(4 * kmax + 16, 32);
  // Boundary modes at the new time level.
  std::vector<std::complex<double>> dk(kmax + 1, 0.0);
  for (int j = 0; j < nth; ++j) {
    double th = 2.0 * kPi * j / nth;
    double v = D(th);
    for (int k = 0; k <= kmax; ++k) {
      double scale = k == 0 ? 1.0 : 2.0;
      dk[k] += scale * v * std::exp(std::complex<double>(0.0, -k * th)) / (double)nth;
    }
  }
  for (int k = 0; k <= kmax; ++k) {
    auto& u = modes[k];
    // Unknowns: i0..n-1 where i0 = 0 for k=0 (center value) else 1 (u(0)=0).
    int i0 = k == 0 ? 0 : 1;
    int m = n - i0;
    std::vector<std::complex<double>> lo(m), di(m), up(m), rhs(m);
    double mu = kappa * dt * 0.5;
    for (int i = i0; i < n; ++i) {
      int row = i - i0;
      double A, B, C;  // L u ~ A u_{i-1} + B u_i + C u_{i+1}
      if (i == 0) {
        A = 0.0;
        B = -4.0 / (h * h);
        C = 4.0 / (h * h);
      } else {
        double ri = r[i];
        A = 1.0 / (h * h) - 1.0 / (2.0 * ri * h);
        C = 1.0 / (h * h) + 1.0 / (2.0 * ri * h);
        B = -2.0 / (h * h) - (double)k * k / (ri * ri);
      }
      lo[row] = -mu * A;
      di[row] = 1.0 - mu * B;
      up[row] = -mu * C;
      std::complex<double> um = i > 0 ? u[i - 1] : 0.0;
      std::complex<double> uc = u[i];
      std::complex<double> uq = u[i + 1];
      if (i == i0 && i > 0) um = 0.0;  // u(0) = 0 for k >= 1
      rhs[row] = uc + mu * (A * um + B * uc + C * uq);
      if (i + 1 == n) rhs[row] += mu * C * dk[k];  // implicit boundary value
      if (i + 1 == n) up[row] = 0.0;
    }
    tridiag_solve(lo, di, up, rhs);
    for (int i = i0; i < n; ++i) u[i] = rhs[i - i0];
    if (k >= 1) u[0] = 0.0;
    u[n] = dk[k];
  }
  time += dt;
}

double DiskHeat::eval(double rr, double theta) const {
  int n = (int)r.size() - 1;
  rr = std::clamp(rr, 0.0, R);
  double fi = rr / (r[1] - r[0]);
  int i = std::min((int)fi, n - 1);
  double t = fi - i;
  double acc = 0.0;
  for (int k = 0; k <= kmax; ++k) {
    std::complex<double> v = modes[k][i] * (1.0 - t) + modes[k][i + 1] * t;
    acc += (v * std::exp(std::complex<double>(0.0, k * theta))).real();
  }
  return acc;
}

InteriorCorrector make_corrector(const DiskHarmonic& U0, const std::function<double(double)>& f1L,
                                 int kmax) {
  InteriorCorrector c;
  c.U0 = U0;
  c.U1bar = DiskHarmonic::fit(U0.R, f1L, kmax);
  return c;
}

}  // namespace kinlab::fluid

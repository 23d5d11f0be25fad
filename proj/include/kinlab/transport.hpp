#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "kinlab/geometry.hpp"
#include "kinlab/vec.hpp"

namespace kinlab::transport {

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 500;
  int plain_iterations = 16;
  int threads = 0;
};

struct ExitHit {
  double t_b = 0.0;
  Vec3 foot;
};

// Backward exit time t_b(x, w) = inf{s >= 0 : (x - eps s w, w) on Gamma^-}
// and the footpoint, for disk / annulus / ball.
ExitHit exit_time(const geometry::Geometry& g, const Vec3& x, const Vec3& w, double eps);

struct Problem {
  geometry::Geometry geom;
  double eps = 0.1;
  std::function<double(const Vec3& x0, const Vec3& w)> inflow;  // g on Gamma^-
  std::function<double(const Vec3& x, const Vec3& w)> source;   // optional
};

// ---------------------------------------------------------------------------
// Full polar-grid solver on the disk / annulus, ordinates on S^1.
// ---------------------------------------------------------------------------

struct DiskGrid {
  std::vector<double> r;  // ascending; r.front() == 0 for the disk
  int ntheta = 0;
  int nalpha = 0;

  bool has_center() const { return r.front() == 0.0; }
  int nr() const { return (int)r.size(); }
  int nspatial() const {
    return has_center() ? 1 + (nr() - 1) * ntheta : nr() * ntheta;
  }
  // Spatial node id; i is the radial index, j the angular index.
  int sid(int i, int j) const {
    if (has_center()) return i == 0 ? 0 : 1 + (i - 1) * ntheta + ((j % ntheta + ntheta) % ntheta);
    return i * ntheta + ((j % ntheta + ntheta) % ntheta);
  }
  double theta(int j) const;
  double alpha(int m) const;
  Vec3 node(int i, int j) const;
  Vec3 ordinate(int m) const;
};

struct DiskFullSolution {
  DiskGrid grid;
  std::vector<double> u;     // [sid * nalpha + m]
  std::vector<double> ubar;  // [sid]
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
  bool converged = false;
  bool used_direct_solve = false;

  double value(int sid, int m) const { return u[(size_t)sid * grid.nalpha + m]; }
};

// One sweep of the mild formulation with absorption sigma:
// u = g e^{-sigma t_b} + int (ubar + S + qscale * uprev) e^{-sigma s} ds.
// uprev (may be empty) is the previous time level at the same ordinate.
std::vector<double> sweep_full(const Problem& p, const DiskGrid& grid,
                               const std::vector<double>& ubar, double sigma,
                               const std::vector<double>& uprev, double qscale, double time,
                               int threads);

DiskFullSolution solve_steady_full(const Problem& p, const DiskGrid& grid,
                                   const SolveOptions& opt = {});

// Plain re-sweeping source iteration (serial); reference for testing.
DiskFullSolution solve_steady_full_reference(const Problem& p, const DiskGrid& grid, double tol,
                                             int max_iter);

struct UnsteadyOptions {
  double T = 1.0;
  double dt0 = 0.0;          // default eps^2
  double coarsen_after = 10.0;  // in units of tau = t/eps^2
  double growth = 1.5;
  SolveOptions solve;
};

struct UnsteadyProblem {
  Problem steady;                                        // geometry, eps, g, S
  std::function<double(const Vec3&, const Vec3&)> initial;  // h(x, w)
  std::function<double(double, const Vec3&, const Vec3&)> inflow_t;  // g(t, x0, w); optional
};

struct DiskFullTrajectory {
  DiskGrid grid;
  std::vector<double> times;
  std::vector<std::vector<double>> u;  // per level
  double compatibility_violation = 0.0;
  bool converged = true;
};

DiskFullTrajectory solve_unsteady_full(const UnsteadyProblem& p, const DiskGrid& grid,
                                       const UnsteadyOptions& opt);

// Discrete residual of the Green identity
//   iint ((w.grad u) v + (w.grad v) u) dx dw = int_Gamma u v dgamma
// for two fields on the same full disk grid.
double greens_identity_residual(const DiskGrid& grid, const std::vector<double>& u,
                                const std::vector<double>& v);

// ---------------------------------------------------------------------------
// Theta-harmonic solver on the disk / annulus: data and solution are finite
// Fourier series in the boundary angle; each mode is a complex problem in
// (r, beta) with beta the ordinate angle relative to the local frame.
// ---------------------------------------------------------------------------

using ModeProfile = std::function<std::complex<double>(const Vec3& x0, const Vec3& w)>;

struct ModeDatum {
  int k = 0;
  ModeProfile p;  // evaluated with the foot rotated to theta = 0
};

struct ModalGrid {
  std::vector<double> r;
  int nalpha = 0;
  double alpha(int m) const;
  int nr() const { return (int)r.size(); }
};

struct ModalSolution {
  ModalGrid grid;
  std::vector<int> ks;
  std::vector<std::vector<std::complex<double>>> u;     // [mode][(i * nalpha + m)]
  std::vector<std::vector<std::complex<double>>> ubar;  // [mode][i]
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;

  // Physical value at grid node (r_i, relative angle beta_m) for boundary
  // angle theta.
  double value(int i, int m, double theta) const;
  double ubar_at(int i, double theta) const;
};

struct ModalProblem {
  geometry::Geometry geom;
  double eps = 0.1;
  std::vector<ModeDatum> data;
  std::vector<ModeDatum> source;  // optional, same convention
};

ModalSolution solve_steady_modal(const ModalProblem& p, const ModalGrid& grid,
                                 const SolveOptions& opt = {});

struct ModalTrajectory {
  ModalGrid grid;
  std::vector<int> ks;
  std::vector<double> times;
  // [level][mode][(i * nalpha + m)]
  std::vector<std::vector<std::vector<std::complex<double>>>> u;
  bool converged = true;

  double value(int level, int i, int m, double theta) const;
};

// Initial data per mode at (r_i, beta_m).
using ModeField = std::function<std::complex<double>(double r, double beta)>;

ModalTrajectory solve_unsteady_modal(const ModalProblem& p, const std::vector<ModeField>& initial,
                                     const ModalGrid& grid, const UnsteadyOptions& opt);

// ---------------------------------------------------------------------------
// Ball with S^2 ordinates: axisymmetric reduction and a coarse full-3D mode.
// ---------------------------------------------------------------------------

struct BallGrid {
  std::vector<double> r;        // r.front() == 0
  int npolar = 0;               // spatial polar nodes (axisym) per ring
  int naz_spatial = 1;          // 1 = axisymmetric reduction
  int nord_polar = 8;           // ordinate grid on S^2
  int nord_az = 8;

  int nspatial() const { return 1 + ((int)r.size() - 1) * npolar * naz_spatial; }
  int nord() const { return nord_polar * nord_az; }
};

struct BallSolution {
  BallGrid grid;
  std::vector<double> u;     // [sid * nord + m]
  std::vector<double> ubar;  // [sid]
  std::vector<Vec3> ordinates;
  std::vector<double> ord_weights;  // sum = 4 pi
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

BallSolution solve_steady_ball(const Problem& p, const BallGrid& grid,
                               const SolveOptions& opt = {});

}  // namespace kinlab::transport

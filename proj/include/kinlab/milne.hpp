#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace kinlab::milne {

// Velocity measure the half-space problem is posed on.
//   S2: w on the sphere, fbar = (1/4pi) int f cos(phi) dphi dpsi,
//       psi on a uniform grid over [-pi, pi].
//   S1: w on the circle (planar domains), fbar = (1/2pi) int f dphi summed
//       over the two tangential sheets psi = +pi/2, -pi/2.
enum class Measure { S2, S1 };

// Curvature data of the layer problem. Radii may be +inf; geometric=false
// selects the flat problem F == 0 regardless of the radii.
struct LayerGeometry {
  double eps = 0.1;
  double R1 = 1.0;
  double R2 = 1.0;
  bool geometric = true;

  double rmin() const { return R1 < R2 ? R1 : R2; }
};

// V(eta, psi) with V(0) = 0 and dV/deta = -F.
double potential_V(const LayerGeometry& g, double eta, double psi);
// F(eta, psi) = -eps (sin^2 psi / (R1 - eps eta) + cos^2 psi / (R2 - eps eta)).
double force_F(const LayerGeometry& g, double eta, double psi);
// E = exp(-V) cos(phi), conserved along characteristics.
double energy_E(const LayerGeometry& g, double eta, double phi, double psi);
// zeta = sqrt(1 - E^2), also conserved; vanishes at the grazing corner.
double weight_zeta(const LayerGeometry& g, double eta, double phi, double psi);

// Angle (in [0, pi/2]) at eta_to on the characteristic through (eta, phi).
// Throws std::domain_error past the turning point.
double characteristic_phi(const LayerGeometry& g, double eta, double phi, double psi,
                          double eta_to);

// Turning point eta+ with V(eta+) = -ln E, if it exists below L.
std::optional<double> eta_plus(const LayerGeometry& g, double eta, double phi, double psi,
                               double L);

// G_{eta,eta'}(phi) = int_{eta'}^{eta} dxi / sin(phi'(phi,eta;xi)); signed,
// negative when eta' > eta. The interval must not straddle the turning point.
double g_integral(const LayerGeometry& g, double eta, double eta_from, double phi, double psi);

struct Grid {
  Measure measure = Measure::S2;
  std::vector<double> eta;    // ascending, eta.front()=0, eta.back()=L
  std::vector<double> phi;    // symmetric Gauss-Legendre nodes in (-pi/2, pi/2)
  std::vector<double> wphi;   // GL weights for d phi
  std::vector<double> psi;    // uniform nodes (S2) or {+pi/2, -pi/2} (S1)
  std::vector<double> wpsi;

  static Grid make(Measure m, double L, int n_eta, int n_phi, int n_psi);

  int neta() const { return (int)eta.size(); }
  int nphi() const { return (int)phi.size(); }
  int npsi() const { return (int)psi.size(); }
  double L() const { return eta.back(); }
  size_t index(int i, int j, int k) const { return ((size_t)i * phi.size() + j) * psi.size() + k; }
  size_t size() const { return eta.size() * phi.size() * psi.size(); }

  // Normalized averaging weight: fbar(eta_i) = sum_jk avg_weight(j,k) f(i,j,k).
  double avg_weight(int j, int k) const;
  // Measure weight of the (phi,psi) inner product <a,b>(eta).
  double ip_weight(int j, int k) const;
};

using InflowDatum = std::function<double(double phi, double psi)>;
using SourceTerm = std::function<double(double eta, double phi, double psi)>;

struct Problem {
  LayerGeometry geom;
  InflowDatum inflow;       // h on sin(phi) > 0
  SourceTerm source;        // optional S(eta, phi, psi)
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 500;
  int plain_iterations = 24;  // source-iteration steps before the direct solve
  int threads = 0;            // 0 = all available
};

struct DecayFit {
  double K0 = 0.0;
  double r2 = 0.0;
  bool degenerate = false;  // constant solution, no decay signal
  bool decaying = true;
};

struct Solution {
  Grid grid;
  LayerGeometry geom;
  std::vector<double> f;     // grid.size() values
  std::vector<double> fbar;  // per eta node
  double f_L = 0.0;
  int iterations = 0;
  double residual = 0.0;                  // fixed-point residual sup|fbar - (b + M fbar)|
  std::vector<double> residual_history;   // sup-norm updates of the plain iteration
  bool converged = false;
  bool used_direct_solve = false;
  double K0_fit = 0.0;
  double decay_r2 = 0.0;
  bool decay_degenerate = false;
  InflowDatum inflow;  // kept for exact wall evaluation

  double value(int i, int j, int k) const { return f[grid.index(i, j, k)]; }
};

// One transport sweep: evaluates K[h] + T[fbar + S] at every grid node.
// fbar_in is linearly interpolated between eta nodes.
std::vector<double> sweep(const Problem& p, const Grid& grid, std::span<const double> fbar_in,
                          int threads = 0);

// Production solver: assembles the affine map fbar -> avg(sweep(fbar)) once,
// runs plain source iteration, and finishes with a direct solve of the fixed
// point when the iteration budget is insufficient.
Solution solve(const Problem& p, const Grid& grid, const SolveOptions& opt = {});

// Plain re-sweeping source iteration, serial. Reference implementation kept
// for testing against solve().
Solution solve_reference(const Problem& p, const Grid& grid, double tol, int max_iter);

// Far-field value <sin^2 phi, f>(L) / ||sin phi||^2 in the grid measure.
double limit_fL(const Grid& grid, std::span<const double> f);

// <sin phi, f>(L): vanishes for specular-symmetric solutions.
double odd_flux_at_L(const Grid& grid, std::span<const double> f);

// Least-squares decay exponent of ln sup_{phi,psi} |f - f_L| over
// eta in [window_lo, window_hi] (defaults [1, L/2]).
DecayFit decay_fit(const Solution& s, double window_lo = 1.0, double window_hi = 0.0);

struct DerivativeDiagnostics {
  double weighted_eta = 0.0;    // sup |e^{K0 eta} zeta df/deta|
  double weighted_phi = 0.0;    // sup |e^{K0 eta} F cos(phi) df/dphi|
  double unweighted_eta = 0.0;  // sup |df/deta|, near-wall grazing region
  double boundary_norm_weighted = 0.0;    // in-flow L2 with sin cos weight
  double boundary_norm_unweighted = 0.0;  // in-flow sup norm
};

DerivativeDiagnostics derivative_diagnostics(const Solution& s);

}  // namespace kinlab::milne

#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kinlab/fluid.hpp"
#include "kinlab/geometry.hpp"
#include "kinlab/milne.hpp"
#include "kinlab/transport.hpp"
#include "kinlab/vec.hpp"

namespace kinlab::asymptotics {

// ---------------------------------------------------------------------------
// Boundary data families: finite Fourier series in the boundary angle with
// inflow profiles in the local velocity angles,
//   g(iota, phi, psi) = sum_t Re[c_t e^{i k_t iota}] p_t(phi, psi).
// ---------------------------------------------------------------------------

struct DatumTerm {
  std::complex<double> c{1.0, 0.0};
  int k = 0;
  std::function<double(double phi, double psi)> p;
};

struct BoundaryDatum {
  std::vector<DatumTerm> terms;

  double eval(double iota, double phi, double psi) const;
  int max_mode() const;
};

// ---------------------------------------------------------------------------
// Grazing cutoffs and the boundary-data decomposition g = G_reg + G_sing.
// ---------------------------------------------------------------------------

struct Cutoffs {
  double band = 0.0;  // eps^alpha
  std::function<double(double phi, double psi)> g1;  // 0 below the band
  std::function<double(double phi, double psi)> g2;  // 1 below the band
};

// Quintic-smoothstep blend across [eps^alpha, 2 eps^alpha]; g is assumed to
// take values in [0, 1].
Cutoffs smooth_cutoffs(const std::function<double(double, double)>& g, double eps, double alpha);

struct DataDecomposition {
  double alpha = 1.0;
  double lambda = 0.5;
  bool lambda_in_01 = true;
  bool degenerate_constant = false;  // constant datum: G_reg = g, G_sing = 0
  double gmin = 0.0, gmax = 1.0;     // affine normalization of the datum
  double matching_residual = 0.0;    // |f_lambda(0,0+) - fbar_lambda(0)|
  double grazing_eta_derivative = 0.0;     // equation-based d f/d eta at the corner
  double grazing_eta_derivative_fd = 0.0;  // finite-difference probe
  std::function<double(double, double)> regular;
  std::function<double(double, double)> singular;
};

DataDecomposition decompose_boundary_data(const std::function<double(double, double)>& g,
                                          const milne::LayerGeometry& geom,
                                          const milne::Grid& grid, double alpha,
                                          const milne::SolveOptions& opt = {});

// ---------------------------------------------------------------------------
// Layer stack: per-boundary-node Milne solutions of the regular and singular
// layers, with far-field limits, stored as Fourier modes over the nodes.
// ---------------------------------------------------------------------------

struct StackOptions {
  int n_boundary_nodes = 16;
  int order = 0;
  double alpha = 1.0;
  bool flat = false;       // classical Milne layer, F == 0
  bool decompose = true;   // skip to solve a single combined layer
  int n_eta = 160;
  int n_phi = 48;
  int n_psi = 2;           // S1 sheets for planar domains
  double L_exponent = 0.5;
  milne::SolveOptions solve;
};

struct NodeLayers {
  milne::Solution reg0;
  milne::Solution sing0;
  std::optional<milne::Solution> reg1;
  double F0L_reg = 0.0, F0L_sing = 0.0, F1L = 0.0;
  DataDecomposition deco;
};

struct LayerStack {
  geometry::Geometry geom;
  double eps = 0.1;
  StackOptions opt;
  milne::Grid grid;
  std::vector<double> iota;  // boundary node angles
  std::vector<NodeLayers> nodes;
  BoundaryDatum datum;

  // Fourier modes over the boundary nodes of the stored layer fields.
  // modes0[kidx][grid index]; kidx covers modes 0 .. n_nodes/2.
  std::vector<std::vector<std::complex<double>>> modes0;
  std::vector<std::vector<std::complex<double>>> modes1;
  std::vector<std::complex<double>> D_modes;    // of F0L_reg + F0L_sing
  std::vector<std::complex<double>> F1L_modes;
  // Normal/tangential components of grad U0 at the nodes (order 1).
  std::vector<std::complex<double>> gn_modes, gt_modes;

  double boundary_D(double iota) const;
  // Total zeroth-order layer (regular + singular) at collar coordinates.
  double layer0(double iota, double eta, double phi, double psi) const;
  double layer1(double iota, double eta, double phi, double psi) const;
};

// Order-0 build: decomposition, both layers, far-field limits per node.
LayerStack build_layer_stack(const geometry::Geometry& geom, double eps,
                             const BoundaryDatum& datum, const StackOptions& opt);

// Order-1 extension on the disk: regular layer with datum w . grad U0 and
// source from the tangential advection of the stored zeroth-order layer.
void add_first_order(LayerStack& stack, const fluid::DiskHarmonic& U0);

// On-disk cache of order-0 stacks keyed by geometry, eps, options, and a
// content fingerprint of the datum. Returns a loaded stack when the key
// matches, otherwise builds and saves.
std::string stack_cache_key(const geometry::Geometry& geom, double eps,
                            const BoundaryDatum& datum, const StackOptions& opt);
bool save_layer_stack(const LayerStack& stack, const std::string& path);
bool load_layer_stack(LayerStack& stack, const std::string& path, const geometry::Geometry& geom,
                      double eps, const BoundaryDatum& datum, const StackOptions& opt);
LayerStack build_layer_stack_cached(const geometry::Geometry& geom, double eps,
                                    const BoundaryDatum& datum, const StackOptions& opt,
                                    const std::string& cache_dir);

// ---------------------------------------------------------------------------
// Initial layer (closed forms) and the compatibility report.
// ---------------------------------------------------------------------------

struct InitialLayer {
  int order = 0;
  std::function<double(const Vec3&, const Vec3&)> h;
  std::function<double(const Vec3&)> hbar;
  // Order-1 pieces (may be empty for order 0):
  std::function<Vec3(const Vec3&)> grad_U0_at0;
  std::function<Vec3(const Vec3&, const Vec3&)> grad_h;   // grad_x h at fixed w
  std::function<Vec3(const Vec3&)> grad_hbar;
  std::function<double(const Vec3&)> avg_wgrad_h;         // int w.grad(h - hbar) dw

  // tau = t / eps^2; returns U^I_0 + eps U^I_1 evaluated at (tau, x, w).
  double eval(double tau, const Vec3& x, const Vec3& w, double eps) const;
};

struct CompatibilityReport {
  double basic_sup = 0.0;    // sup |h - g(0)| over Gamma^-
  double dtg_sup = 0.0;      // sup |d_t g(0)| over Gamma^-
  double wgradh_sup = 0.0;   // sup |w . grad h| over Gamma^-
  double aniso_sup = 0.0;    // sup |h - hbar| over Gamma^-
  double const_dev = 0.0;    // sup |h - C0| over Gamma^-
  bool basic_ok = false;
  bool improved_ok = false;
  bool layers_vanish_licensed = false;
};

CompatibilityReport compatibility_check(
    const geometry::Geometry& geom, const std::function<double(const Vec3&, const Vec3&)>& h,
    const std::function<double(const Vec3&)>& hbar,
    const std::function<double(double, const Vec3&, const Vec3&)>& g,
    const std::function<double(const Vec3&, const Vec3&)>& dtg0, int n_boundary, int n_ordinate,
    double tol = 1e-9);

// ---------------------------------------------------------------------------
// Composite expansion evaluator.
// ---------------------------------------------------------------------------

struct Composite {
  geometry::Geometry geom;
  double eps = 0.1;
  int order = 0;
  bool unsteady = false;
  std::function<double(double t, const Vec3& x)> U0;
  std::function<Vec3(double t, const Vec3& x)> grad_U0;  // order 1
  std::function<double(const Vec3& x)> U1bar;            // order 1
  const LayerStack* stack = nullptr;
  const InitialLayer* init = nullptr;

  double eval(double t, const Vec3& x, const Vec3& w) const;
  double eval(const Vec3& x, const Vec3& w) const { return eval(0.0, x, w); }
};

struct ErrorNorms {
  double linf = 0.0;
  double l2 = 0.0;
  double linf_interior = 0.0;
  int interior_count = 0;
};

// Norms of (reference - composite) over the reference grid; the interior norm
// excludes the collar mu < collar_cut.
ErrorNorms error_norms_full(const transport::DiskFullSolution& ref, const Composite& comp,
                            double collar_cut, double t = 0.0);
ErrorNorms error_norms_modal(const transport::ModalSolution& ref, const Composite& comp,
                             double collar_cut, int ntheta_sample = 192);
ErrorNorms error_norms_modal_level(const transport::ModalTrajectory& ref, int level,
                                   const Composite& comp, double collar_cut,
                                   int ntheta_sample = 96);

// ---------------------------------------------------------------------------
// Convergence study.
// ---------------------------------------------------------------------------

struct StudyConfig {
  double R = 1.0;
  std::vector<double> eps_list;
  BoundaryDatum datum;
  int order = 0;
  bool flat_pair = false;
  double collar_factor = 10.0;  // interior cut at mu = collar_factor * eps
  int boundary_nodes = 16;
  int ref_nr_core = 64;         // reference radial core resolution
  int ref_nalpha = 128;
  double ref_drmin_factor = 64.0;  // finest radial cell = eps / factor
  int milne_n_eta = 0;          // 0 = auto from L
  int milne_n_phi = 96;
  double refine_factor = 1.3;   // reference self-check refinement
  milne::SolveOptions milne_solve;
  transport::SolveOptions transport_solve;
  int threads = 0;
};

struct StudyRow {
  double eps = 0.0;
  std::string variant;  // "geometric" or "flat"
  double linf = 0.0, l2 = 0.0, linf_interior = 0.0;
  double ref_selfcheck = 0.0;  // reference drift under refinement
  bool flagged = false;
  int ref_nr = 0, ref_nalpha = 0;
};

struct ConvergenceReport {
  std::vector<StudyRow> rows;
  std::optional<double> slope;         // d ln(interior linf) / d ln(eps), geometric rows
  std::optional<double> slope_stderr;
  bool any_flagged = false;
  bool degenerate = false;  // errors at solver floor; slope withheld
};

ConvergenceReport convergence_study(const StudyConfig& cfg);

}  // namespace kinlab::asymptotics

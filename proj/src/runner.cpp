#include "kinlab/runner.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <numbers>

#include "kinlab/io.hpp"
#include "json.hpp"

namespace kinlab::runner {

namespace {

constexpr double kPi = std::numbers::pi;
using nlohmann::json;

double wall_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_manifest(const std::string& dir, const config::RunConfig& c, double seconds,
                    const json& extra = {}) {
  json j;
  j["tool"] = kVersion;
  j["wall_seconds"] = seconds;
  j["config"] = json::parse(config::to_json(c));
  if (!extra.is_null()) j["run"] = extra;
  io::write_text_file(dir + "/manifest.json", j.dump(2) + "\n");
}

geometry::Geometry make_geometry(const config::RunConfig& c) {
  if (c.geometry == "disk") return geometry::Geometry::disk(c.radius);
  if (c.geometry == "annulus") return geometry::Geometry::annulus(c.radius, c.inner_radius);
  return geometry::Geometry::ball(c.radius);
}

milne::LayerGeometry make_layer_geometry(const config::RunConfig& c, double eps) {
  milne::LayerGeometry g;
  g.eps = eps;
  g.geometric = c.geometric;
  if (c.R1 > 0.0) {
    g.R1 = c.R1;
    g.R2 = c.R2 > 0.0 ? c.R2 : c.R1;
  } else if (c.geometry == "ball") {
    g.R1 = g.R2 = c.radius;
  } else {
    g.R1 = c.radius;
    g.R2 = std::numeric_limits<double>::infinity();
  }
  return g;
}

double require_eps(const config::RunConfig& c) {
  if (c.epsilon.empty())
    throw config::ConfigError("config: milne.epsilon is required for this subcommand");
  return c.epsilon.front();
}

}  // namespace

std::function<double(double, double)> angular_profile(const config::RunConfig& c) {
  std::string p = c.profile;
  double width = c.width;
  if (p == "constant") return [](double, double) { return 1.0; };
  if (p == "ramp") return [](double phi, double) { return phi > 0 ? phi / (kPi / 2.0) : 0.0; };
  if (p == "grazing-bump")
    return [width](double phi, double) { return std::exp(-(phi / width) * (phi / width)); };
  if (p == "sin-phi") return [](double phi, double) { return phi > 0 ? std::sin(phi) : 0.0; };
  if (p == "cos-psi-ramp")
    return [](double phi, double psi) {
      return phi > 0 ? (phi / (kPi / 2.0)) * (0.75 + 0.25 * std::sin(psi)) : 0.0;
    };
  throw config::ConfigError("config: unknown data.profile '" + p + "'");
}

asymptotics::BoundaryDatum make_datum(const config::RunConfig& c) {
  asymptotics::BoundaryDatum d;
  asymptotics::DatumTerm base;
  base.c = c.c0;
  base.k = 0;
  base.p = [](double, double) { return 1.0; };
  d.terms.push_back(base);
  if (c.amplitude != 0.0) {
    asymptotics::DatumTerm t;
    t.c = c.amplitude;
    t.k = 0;
    t.p = angular_profile(c);
    d.terms.push_back(t);
    if (c.mode_amplitude != 0.0 && c.mode_k != 0) {
      asymptotics::DatumTerm m;
      m.c = c.amplitude * c.mode_amplitude * std::exp(std::complex<double>(0.0, c.phase));
      m.k = c.mode_k;
      m.p = angular_profile(c);
      d.terms.push_back(m);
    }
  }
  return d;
}

int run_milne(const config::RunConfig& c) {
  auto t0 = std::chrono::steady_clock::now();
  double eps = require_eps(c);
  milne::LayerGeometry lg = make_layer_geometry(c, eps);
  double L = std::pow(eps, -c.L_exponent);
  milne::Measure meas = c.measure == "s1" ? milne::Measure::S1 : milne::Measure::S2;
  milne::Grid grid = milne::Grid::make(meas, L, c.n_eta, c.n_phi, c.n_psi);
  auto prof = angular_profile(c);
  double c0 = c.c0, amp = c.amplitude;
  milne::Problem prob{lg, [c0, amp, prof](double phi, double psi) {
                        return c0 + amp * prof(phi, psi);
                      },
                      nullptr};
  milne::SolveOptions opt;
  opt.tol = c.tol;
  opt.max_iter = c.max_iter;
  opt.threads = c.workers;
  milne::Solution sol = milne::solve(prob, grid, opt);

  io::make_directories(c.out_dir);
  io::CsvWriter csv(c.out_dir + "/solution.csv",
                    {"eta", "phi", "psi", "f", "F", "zeta", "zeta_mask"});
  double band = 2.0 * std::pow(eps, c.alpha);  // singular region: zeta < 2 eps^alpha
  for (int i = 0; i < grid.neta(); ++i)
    for (int j = 0; j < grid.nphi(); ++j)
      for (int k = 0; k < grid.npsi(); ++k) {
        double F = milne::force_F(lg, grid.eta[i], grid.psi[k]);
        double zeta = milne::weight_zeta(lg, grid.eta[i], grid.phi[j], grid.psi[k]);
        csv.row(std::vector<double>{grid.eta[i], grid.phi[j], grid.psi[k], sol.value(i, j, k), F,
                                    zeta, zeta < band ? 1.0 : 0.0});
      }
  csv.close();

  milne::DerivativeDiagnostics diag = milne::derivative_diagnostics(sol);
  json s;
  s["f_L"] = sol.f_L;
  s["iterations"] = sol.iterations;
  s["residual"] = sol.residual;
  s["converged"] = sol.converged;
  s["used_direct_solve"] = sol.used_direct_solve;
  s["K0_fit"] = sol.K0_fit;
  s["decay_r2"] = sol.decay_r2;
  s["decay_degenerate"] = sol.decay_degenerate;
  s["diagnostics"] = {{"weighted_eta", diag.weighted_eta},
                      {"weighted_phi", diag.weighted_phi},
                      {"unweighted_eta", diag.unweighted_eta},
                      {"boundary_norm_weighted", diag.boundary_norm_weighted},
                      {"boundary_norm_unweighted", diag.boundary_norm_unweighted},
                      {"odd_flux_at_L", milne::odd_flux_at_L(grid, sol.f)}};
  io::write_text_file(c.out_dir + "/summary.json", s.dump(2) + "\n");
  write_manifest(c.out_dir, c, wall_seconds(t0),
                 {{"L", L}, {"grid", {grid.neta(), grid.nphi(), grid.npsi()}}});
  return sol.converged ? kOk : kNotConverged;
}

int run_transport(const config::RunConfig& c) {
  auto t0 = std::chrono::steady_clock::now();
  double eps = require_eps(c);
  geometry::Geometry geom = make_geometry(c);
  asymptotics::BoundaryDatum datum = make_datum(c);
  io::make_directories(c.out_dir);

  if (c.geometry == "ball" || c.mode == "ball-axi") {
    transport::BallGrid bg;
    bg.r.resize(c.n_r + 1);
    for (int i = 0; i <= c.n_r; ++i) bg.r[i] = c.radius * i / c.n_r;
    bg.npolar = std::max(4, c.n_theta);
    bg.naz_spatial = c.mode == "ball-axi" ? 1 : std::max(4, c.n_theta / 2);
    bg.nord_polar = std::max(4, c.n_alpha / 8);
    bg.nord_az = std::max(4, c.n_alpha / 8);
    auto prof = angular_profile(c);
    double c0v = c.c0, amp = c.amplitude;
    transport::Problem prob{geom, eps,
                            [&geom, c0v, amp, prof](const Vec3& x0, const Vec3& w) {
                              geometry::LayerCoordinates lc =
                                  geometry::to_layer_coords(geom, x0, w, 1.0);
                              return c0v + amp * prof(lc.phi, lc.psi);
                            },
                            nullptr};
    transport::SolveOptions opt;
    opt.tol = c.tol;
    opt.max_iter = c.max_iter;
    opt.threads = c.workers;
    transport::BallSolution sol = transport::solve_steady_ball(prob, bg, opt);
    io::CsvWriter csv(c.out_dir + "/field.csv", {"r", "polar", "az", "wx", "wy", "wz", "u"});
    int no = (int)sol.ordinates.size();
    for (int i = 0; i < (int)bg.r.size(); ++i) {
      int lmax = i == 0 ? 1 : bg.npolar;
      for (int l = 0; l < lmax; ++l)
        for (int a = 0; a < bg.naz_spatial; ++a) {
          int sid = i == 0 ? 0 : 1 + ((i - 1) * bg.npolar + l) * bg.naz_spatial + a;
          double th = bg.npolar > 1 ? kPi * l / (bg.npolar - 1) : 0.0;
          double az = 2.0 * kPi * a / bg.naz_spatial;
          for (int m = 0; m < no; ++m)
            csv.row(std::vector<double>{bg.r[i], th, az, sol.ordinates[m].x, sol.ordinates[m].y,
                                        sol.ordinates[m].z, sol.u[(size_t)sid * no + m]});
          if (i == 0) break;
        }
    }
    csv.close();
    write_manifest(c.out_dir, c, wall_seconds(t0),
                   {{"iterations", sol.iterations}, {"residual", sol.residual}});
    return sol.converged ? kOk : kNotConverged;
  }

  transport::DiskGrid grid;
  grid.r.resize(c.n_r + 1);
  double r0 = c.geometry == "annulus" ? c.inner_radius : 0.0;
  for (int i = 0; i <= c.n_r; ++i) grid.r[i] = r0 + (c.radius - r0) * i / c.n_r;
  grid.ntheta = c.n_theta;
  grid.nalpha = c.n_alpha;
  transport::Problem prob{geom, eps,
                          [&datum](const Vec3& x0, const Vec3& w) {
                            double th = std::atan2(x0.y, x0.x);
                            Vec3 nu = normalized(Vec3{x0.x, x0.y, 0.0});
                            Vec3 t1{-nu.y, nu.x, 0.0};
                            double sphi = std::clamp(-dot(w, nu), -1.0, 1.0);
                            double phi = std::asin(sphi);
                            double psi = dot(w, t1) >= 0.0 ? kPi / 2.0 : -kPi / 2.0;
                            return datum.eval(th, phi, psi);
                          },
                          nullptr};
  transport::SolveOptions opt;
  opt.tol = c.tol;
  opt.max_iter = c.max_iter;
  opt.threads = c.workers;

  if (c.unsteady) {
    transport::UnsteadyProblem up;
    up.steady = prob;
    double amp = c.amplitude, R = c.radius, c0v = c.c0;
    up.initial = [amp, R, c0v](const Vec3& x, const Vec3& w) {
      double rr = std::hypot(x.x, x.y) / R;
      double s = (1.0 - rr * rr);
      return c0v + amp * s * s * w.x;
    };
    up.steady.inflow = [c0v](const Vec3&, const Vec3&) { return c0v; };
    transport::UnsteadyOptions uopt;
    uopt.T = c.T > 0.0 ? c.T : 5.0 * eps * eps;
    uopt.dt0 = c.dt0;
    uopt.solve = opt;
    transport::DiskFullTrajectory tr = transport::solve_unsteady_full(up, grid, uopt);
    const std::vector<double>& u = tr.u.back();
    io::CsvWriter csv(c.out_dir + "/field.csv", {"r", "theta", "alpha", "u"});
    for (int i = 0; i < grid.nr(); ++i) {
      int jmax = (grid.has_center() && i == 0) ? 1 : grid.ntheta;
      for (int j = 0; j < jmax; ++j)
        for (int m = 0; m < grid.nalpha; ++m)
          csv.row(std::vector<double>{grid.r[i], grid.theta(j), grid.alpha(m),
                                      u[(size_t)grid.sid(i, j) * grid.nalpha + m]});
    }
    csv.close();
    write_manifest(c.out_dir, c, wall_seconds(t0),
                   {{"levels", tr.times.size()},
                    {"T", tr.times.back()},
                    {"compatibility_violation", tr.compatibility_violation}});
    return tr.converged ? kOk : kNotConverged;
  }

  transport::DiskFullSolution sol = transport::solve_steady_full(prob, grid, opt);
  io::CsvWriter csv(c.out_dir + "/field.csv", {"r", "theta", "alpha", "u"});
  for (int i = 0; i < grid.nr(); ++i) {
    int jmax = (grid.has_center() && i == 0) ? 1 : grid.ntheta;
    for (int j = 0; j < jmax; ++j)
      for (int m = 0; m < grid.nalpha; ++m)
        csv.row(std::vector<double>{grid.r[i], grid.theta(j), grid.alpha(m),
                                    sol.value(grid.sid(i, j), m)});
  }
  csv.close();
  write_manifest(c.out_dir, c, wall_seconds(t0),
                 {{"iterations", sol.iterations},
                  {"residual", sol.residual},
                  {"used_direct_solve", sol.used_direct_solve},
                  {"grid", {grid.nr(), grid.ntheta, grid.nalpha}}});
  return sol.converged ? kOk : kNotConverged;
}

int run_decompose(const config::RunConfig& c) {
  auto t0 = std::chrono::steady_clock::now();
  double eps = require_eps(c);
  milne::LayerGeometry lg = make_layer_geometry(c, eps);
  double L = std::pow(eps, -c.L_exponent);
  milne::Measure meas = c.measure == "s1" ? milne::Measure::S1 : milne::Measure::S2;
  milne::Grid grid = milne::Grid::make(meas, L, c.n_eta, c.n_phi, c.n_psi);
  auto prof = angular_profile(c);
  double c0 = c.c0, amp = c.amplitude;
  auto g = [c0, amp, prof](double phi, double psi) { return c0 + amp * prof(phi, psi); };
  milne::SolveOptions opt;
  opt.tol = c.tol;
  opt.max_iter = c.max_iter;
  opt.threads = c.workers;
  asymptotics::DataDecomposition d =
      asymptotics::decompose_boundary_data(g, lg, grid, c.alpha, opt);

  io::make_directories(c.out_dir);
  json j;
  j["lambda"] = d.lambda;
  j["lambda_in_01"] = d.lambda_in_01;
  j["degenerate_constant"] = d.degenerate_constant;
  j["matching_residual"] = d.matching_residual;
  j["grazing_eta_derivative"] = d.grazing_eta_derivative;
  j["grazing_eta_derivative_fd"] = d.grazing_eta_derivative_fd;
  j["alpha"] = d.alpha;
  j["band"] = std::pow(eps, c.alpha);
  j["gmin"] = d.gmin;
  j["gmax"] = d.gmax;
  io::write_text_file(c.out_dir + "/decomposition.json", j.dump(2) + "\n");
  write_manifest(c.out_dir, c, wall_seconds(t0));
  if (d.degenerate_constant) return kOk;
  return (d.lambda_in_01 && d.matching_residual < 1e-6) ? kOk : kNotConverged;
}

int run_expand(const config::RunConfig& c) {
  auto t0 = std::chrono::steady_clock::now();
  double eps = require_eps(c);
  geometry::Geometry geom = make_geometry(c);
  asymptotics::BoundaryDatum datum = make_datum(c);
  asymptotics::StackOptions sopt;
  sopt.n_boundary_nodes = c.boundary_nodes;
  sopt.order = c.order;
  sopt.flat = c.flat;
  sopt.alpha = c.alpha;
  sopt.n_eta = c.milne_n_eta;
  sopt.n_phi = c.milne_n_phi;
  sopt.solve.tol = c.tol;
  sopt.solve.max_iter = c.max_iter;
  sopt.solve.threads = c.workers;
  asymptotics::LayerStack stack =
      asymptotics::build_layer_stack_cached(geom, eps, datum, sopt, c.cache_dir);
  fluid::DiskHarmonic U0 = fluid::DiskHarmonic::fit(
      c.radius, [&stack](double th) { return stack.boundary_D(th); },
      std::max(4, datum.max_mode() + 2));
  asymptotics::Composite comp;
  comp.geom = geom;
  comp.eps = eps;
  comp.order = c.order;
  comp.stack = &stack;
  comp.U0 = [&U0](double, const Vec3& x) { return U0.eval(x); };
  fluid::InteriorCorrector corr;
  if (c.order >= 1 && geom.kind != geometry::Kind::Ball) {
    asymptotics::add_first_order(stack, U0);
    corr = fluid::make_corrector(
        U0,
        [&stack](double th) {
          double acc = 0.0;
          for (size_t k = 0; k < stack.F1L_modes.size(); ++k)
            acc += (stack.F1L_modes[k] * std::exp(std::complex<double>(0.0, (double)k * th))).real();
          return acc;
        },
        std::max(4, datum.max_mode() + 2));
    comp.grad_U0 = [&U0](double, const Vec3& x) { return U0.grad(x); };
    comp.U1bar = [&corr](const Vec3& x) { return corr.U1bar.eval(x); };
  }

  // Boundary consistency of the composite on the in-flow set.
  double bc = 0.0;
  int nb = 48, nw = 64;
  for (int b = 0; b < nb; ++b) {
    double th = 2.0 * kPi * b / nb;
    Vec3 x0{c.radius * std::cos(th), c.radius * std::sin(th), 0.0};
    Vec3 nu = normalized(x0);
    Vec3 t1{-nu.y, nu.x, 0.0};
    for (int m = 0; m < nw; ++m) {
      double a = (m + 0.5) * 2.0 * kPi / nw;
      Vec3 w{std::cos(a), std::sin(a), 0.0};
      double sphi = -dot(w, nu);
      if (sphi <= 1e-9) continue;
      double phi = std::asin(std::clamp(sphi, -1.0, 1.0));
      double psi = dot(w, t1) >= 0.0 ? kPi / 2.0 : -kPi / 2.0;
      double g = datum.eval(th, phi, psi);
      bc = std::max(bc, std::abs(comp.eval(0.0, x0, w) - g));
    }
  }

  io::make_directories(c.out_dir);
  io::CsvWriter csv(c.out_dir + "/composite.csv", {"r", "theta", "alpha", "value"});
  int nr = 48, nth = 16, na = 32;
  for (int i = 0; i <= nr; ++i) {
    double r = c.radius * i / nr;
    for (int jj = 0; jj < nth; ++jj) {
      double th = 2.0 * kPi * jj / nth;
      Vec3 x{r * std::cos(th), r * std::sin(th), 0.0};
      for (int m = 0; m < na; ++m) {
        double a = (m + 0.5) * 2.0 * kPi / na;
        csv.row(std::vector<double>{r, th, a, comp.eval(0.0, x, {std::cos(a), std::sin(a), 0.0})});
      }
    }
  }
  csv.close();
  json j;
  j["boundary_consistency"] = bc;
  j["order"] = c.order;
  j["flat"] = c.flat;
  double dmin = 1e300, dmax = -1e300;
  for (int b = 0; b < 64; ++b) {
    double v = stack.boundary_D(2.0 * kPi * b / 64);
    dmin = std::min(dmin, v);
    dmax = std::max(dmax, v);
  }
  j["D_min"] = dmin;
  j["D_max"] = dmax;
  std::vector<double> lams, residuals;
  for (const auto& n : stack.nodes) {
    lams.push_back(n.deco.lambda);
    residuals.push_back(n.deco.matching_residual);
  }
  j["lambda"] = lams;
  j["matching_residuals"] = residuals;
  j["U0_coefficients"] = {{"a", U0.a}, {"b", U0.b}};
  io::write_text_file(c.out_dir + "/expand.json", j.dump(2) + "\n");
  write_manifest(c.out_dir, c, wall_seconds(t0));
  return kOk;
}

int run_converge(const config::RunConfig& c) {
  auto t0 = std::chrono::steady_clock::now();
  if (c.epsilon.size() < 3)
    throw config::ConfigError("config: milne.epsilon needs at least 3 values for converge");
  asymptotics::StudyConfig sc;
  sc.R = c.radius;
  sc.eps_list = c.epsilon;
  sc.datum = make_datum(c);
  sc.order = c.order;
  sc.flat_pair = c.flat_pair;
  sc.collar_factor = c.collar_factor;
  sc.boundary_nodes = c.boundary_nodes;
  sc.ref_nr_core = c.ref_nr_core;
  sc.ref_nalpha = c.ref_nalpha;
  sc.ref_drmin_factor = 64.0;
  sc.milne_n_eta = c.milne_n_eta;
  sc.milne_n_phi = c.milne_n_phi;
  sc.milne_solve.tol = c.tol;
  sc.milne_solve.max_iter = c.max_iter;
  sc.transport_solve.tol = c.tol;
  sc.threads = c.workers;
  asymptotics::ConvergenceReport rep = asymptotics::convergence_study(sc);

  io::make_directories(c.out_dir);
  io::CsvWriter csv(c.out_dir + "/convergence.csv",
                    {"epsilon", "variant", "linf", "l2", "linf_interior", "ref_selfcheck",
                     "flagged", "ref_nr", "ref_nalpha"});
  for (const auto& r : rep.rows) {
    csv.row(std::vector<std::string>{io::format_double(r.eps), r.variant,
                                     io::format_double(r.linf), io::format_double(r.l2),
                                     io::format_double(r.linf_interior),
                                     io::format_double(r.ref_selfcheck),
                                     r.flagged ? "1" : "0", std::to_string(r.ref_nr),
                                     std::to_string(r.ref_nalpha)});
  }
  csv.close();
  json j;
  if (rep.slope) j["slope"] = *rep.slope;
  if (rep.slope_stderr) j["slope_stderr"] = *rep.slope_stderr;
  j["degenerate"] = rep.degenerate;
  j["any_flagged"] = rep.any_flagged;
  json pairs = json::array();
  for (const auto& r : rep.rows)
    pairs.push_back({{"epsilon", r.eps},
                     {"variant", r.variant},
                     {"linf", r.linf},
                     {"l2", r.l2},
                     {"linf_interior", r.linf_interior},
                     {"flagged", r.flagged}});
  j["pairs"] = pairs;
  io::write_text_file(c.out_dir + "/summary.json", j.dump(2) + "\n");
  write_manifest(c.out_dir, c, wall_seconds(t0));
  return rep.any_flagged ? kUnderResolved : kOk;
}

int dispatch(const config::RunConfig& c) {
  try {
    if (c.subcommand == "milne") return run_milne(c);
    if (c.subcommand == "transport") return run_transport(c);
    if (c.subcommand == "decompose") return run_decompose(c);
    if (c.subcommand == "expand") return run_expand(c);
    if (c.subcommand == "converge") return run_converge(c);
    std::cerr << "unknown subcommand '" << c.subcommand << "'\n";
    return kConfigError;
  } catch (const config::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config: " << e.what() << "\n";
    return kConfigError;
  }
}

}  // namespace kinlab::runner

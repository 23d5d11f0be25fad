#include "kinlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kinlab::geometry {

static constexpr double kInf = std::numeric_limits<double>::infinity();

Geometry Geometry::disk(double R) {
  if (!(R > 0.0)) throw std::invalid_argument("disk: R must be positive");
  return {Kind::Disk, R, 0.0};
}

Geometry Geometry::annulus(double R, double R_in) {
  if (!(R > 0.0) || !(R_in > 0.0) || !(R_in < R))
    throw std::invalid_argument("annulus: need 0 < R_in < R");
  return {Kind::Annulus, R, R_in};
}

Geometry Geometry::ball(double R) {
  if (!(R > 0.0)) throw std::invalid_argument("ball: R must be positive");
  return {Kind::Ball, R, 0.0};
}

BoundaryFrame boundary_frame(const Geometry& g, double iota1, double iota2) {
  BoundaryFrame f;
  if (g.kind == Kind::Ball) {
    double th = iota1, az = iota2;
    if (th < 0.0 || th > 3.14159265358979323846 + 1e-12)
      throw std::domain_error("boundary_frame: polar angle outside [0, pi]");
    double st = std::sin(th), ct = std::cos(th);
    double sa = std::sin(az), ca = std::cos(az);
    f.point = {g.R * st * ca, g.R * st * sa, g.R * ct};
    f.normal = {st * ca, st * sa, ct};
    // iota1 = polar angle (meridian direction), iota2 = azimuth.
    f.tangent1 = {ct * ca, ct * sa, -st};
    f.tangent2 = {-sa, ca, 0.0};
    f.R1 = f.R2 = g.R;
    f.P1 = g.R;
    f.P2 = g.R * st;
    f.d12r = {-g.R * ct * sa, g.R * ct * ca, 0.0};
  } else {
    double c = std::cos(iota1), s = std::sin(iota1);
    f.point = {g.R * c, g.R * s, 0.0};
    f.normal = {c, s, 0.0};
    f.tangent1 = {-s, c, 0.0};
    f.tangent2 = {0.0, 0.0, 1.0};
    f.R1 = g.R;
    f.R2 = kInf;
    f.P1 = g.R;
    f.P2 = 1.0;
    f.d12r = {0.0, 0.0, 0.0};
  }
  return f;
}

LayerCoordinates to_layer_coords(const Geometry& g, const Vec3& x, const Vec3& w, double eps) {
  LayerCoordinates c;
  if (g.kind == Kind::Ball) {
    double r = norm(x);
    c.mu = g.R - r;
    if (r == 0.0) throw std::domain_error("to_layer_coords: center has no chart");
    c.iota1 = std::acos(std::clamp(x.z / r, -1.0, 1.0));
    c.iota2 = std::atan2(x.y, x.x);
  } else {
    double r = std::hypot(x.x, x.y);
    c.mu = g.R - r;
    if (r == 0.0) throw std::domain_error("to_layer_coords: center has no chart");
    c.iota1 = std::atan2(x.y, x.x);
    c.iota2 = 0.0;
  }
  if (c.mu < -1e-12 || c.mu >= g.collar_width())
    throw std::domain_error("to_layer_coords: point outside the boundary collar");
  if (c.mu < 0.0) c.mu = 0.0;
  c.eta = c.mu / eps;
  BoundaryFrame f = boundary_frame(g, c.iota1, c.iota2);
  double sphi = std::clamp(-dot(w, f.normal), -1.0, 1.0);
  c.phi = std::asin(sphi);
  double w1 = dot(w, f.tangent1), w2 = dot(w, f.tangent2);
  c.psi = (w1 == 0.0 && w2 == 0.0) ? 0.0 : std::atan2(w1, w2);
  return c;
}

std::pair<Vec3, Vec3> from_layer_coords(const Geometry& g, const LayerCoordinates& c, double eps) {
  if (c.mu < 0.0 || c.mu >= g.collar_width())
    throw std::domain_error("from_layer_coords: mu outside the boundary collar");
  BoundaryFrame f = boundary_frame(g, c.iota1, c.iota2);
  Vec3 x = f.point - c.mu * f.normal;
  double sp = std::sin(c.phi), cp = std::cos(c.phi);
  Vec3 w = -sp * f.normal + cp * std::sin(c.psi) * f.tangent1 + cp * std::cos(c.psi) * f.tangent2;
  (void)eps;
  return {x, w};
}

}  // namespace kinlab::geometry

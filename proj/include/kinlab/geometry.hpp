#pragma once

#include <optional>
#include <stdexcept>

#include "kinlab/vec.hpp"

namespace kinlab::geometry {

enum class Kind { Disk, Annulus, Ball };

// Constant-curvature domains: disk / annulus (z=0 plane) and ball. The
// annulus is accepted for layer construction on its outer boundary only.
struct Geometry {
  Kind kind = Kind::Disk;
  double R = 1.0;       // outer radius
  double R_in = 0.0;    // inner radius, annulus only

  static Geometry disk(double R);
  static Geometry annulus(double R, double R_in);
  static Geometry ball(double R);

  int dim() const { return kind == Kind::Ball ? 3 : 2; }
  // Width of the boundary collar on the outer boundary.
  double collar_width() const { return kind == Kind::Annulus ? R - R_in : R; }
};

// Orthonormal boundary frame at r(iota1, iota2) with outward normal and
// principal curvature radii. For planar domains tangent2 = e_z and R2 = inf.
struct BoundaryFrame {
  Vec3 point;
  Vec3 normal;              // outward unit normal
  Vec3 tangent1, tangent2;  // unit tangents, {t1, t2, n} right-handed
  double R1 = 0.0, R2 = 0.0;
  double P1 = 1.0, P2 = 1.0;  // |d r / d iota_i|
  Vec3 d12r;                  // mixed chart derivative, needed by the psi rotation terms
};

// Collar coordinates of a phase-space point: normal distance, chart
// parameters, rescaled distance eta = mu/eps and velocity angles defined by
// (-w.n, w.t1, w.t2) = (sin phi, cos phi sin psi, cos phi cos psi).
struct LayerCoordinates {
  double mu = 0.0;
  double iota1 = 0.0, iota2 = 0.0;
  double eta = 0.0;
  double phi = 0.0;  // in [-pi/2, pi/2]
  double psi = 0.0;  // in [-pi, pi]
};

// Frame at chart parameters. Disk/annulus: iota1 = polar angle, iota2 ignored.
// Ball: iota1 = polar angle in [0, pi], iota2 = azimuth.
BoundaryFrame boundary_frame(const Geometry& g, double iota1, double iota2 = 0.0);

// Collar coordinates of (x, w); throws std::domain_error outside the collar.
LayerCoordinates to_layer_coords(const Geometry& g, const Vec3& x, const Vec3& w, double eps);

// Inverse of to_layer_coords.
std::pair<Vec3, Vec3> from_layer_coords(const Geometry& g, const LayerCoordinates& c, double eps);

}  // namespace kinlab::geometry

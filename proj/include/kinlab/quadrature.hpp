#pragma once

#include <cstddef>
#include <vector>

namespace kinlab {

struct QuadRule {
  std::vector<double> x;  // nodes
  std::vector<double> w;  // weights
};

// Gauss-Legendre rule on [-1, 1].
QuadRule gauss_legendre(int n);

// Gauss-Legendre rule mapped to [a, b].
QuadRule gauss_legendre(int n, double a, double b);

// Node grid on [0, L] with n cells, geometrically graded toward 0: the first
// cell has the smallest width and widths grow by `ratio` up to a cap of
// cap_factor * L / n, after which the grid is uniform. Returns n+1 nodes.
std::vector<double> graded_wall_grid(double L, int n, double ratio = 1.15,
                                     double cap_factor = 3.0);

// Radial grid on [r0, R] with a uniform core and geometric refinement toward
// the outer boundary down to cell width ~dr_min. Returns ascending nodes.
std::vector<double> boundary_refined_radii(double r0, double R, int n_core,
                                           double dr_min, double growth = 1.3);

// Quintic smoothstep: 0 for t<=0, 1 for t>=1, C^2 across the ends.
double smoothstep5(double t);

// Least-squares line fit y ~ a + b x. Returns {a, b, r_squared}.
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace kinlab

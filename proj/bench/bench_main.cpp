// Timing comparison of the OpenMP kernels against the serial reference
// implementations: Milne sweeps and transport sweeps at a few sizes.

#include <chrono>
#include <cstdio>
#include <numbers>

#include "kinlab/milne.hpp"
#include "kinlab/transport.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace kinlab;

namespace {

double now() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <class F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    double t0 = now();
    f();
    best = std::min(best, now() - t0);
  }
  return best;
}

}  // namespace

int main() {
  int hw = 1;
#ifdef _OPENMP
  hw = omp_get_max_threads();
#endif
  std::printf("threads available: %d\n\n", hw);

  {
    milne::LayerGeometry lg{0.1, 1.0, 1.0, true};
    milne::Grid grid = milne::Grid::make(milne::Measure::S2, std::pow(0.1, -0.5), 200, 64, 8);
    milne::Problem prob{lg, [](double phi, double) { return 1.0 + std::sin(phi); }, nullptr};
    std::vector<double> fbar(grid.neta(), 0.5);
    std::printf("milne sweep, grid %dx%dx%d\n", grid.neta(), grid.nphi(), grid.npsi());
    double ts = time_best_of(3, [&] { milne::sweep(prob, grid, fbar, 1); });
    double tp = time_best_of(3, [&] { milne::sweep(prob, grid, fbar, 0); });
    std::printf("  serial    %8.3f ms\n", ts * 1e3);
    std::printf("  parallel  %8.3f ms   speedup %.2fx\n\n", tp * 1e3, ts / tp);

    milne::Grid small = milne::Grid::make(milne::Measure::S2, std::pow(0.1, -0.5), 60, 24, 4);
    std::printf("milne solve, grid %dx%dx%d (direct vs plain iteration)\n", small.neta(),
                small.nphi(), small.npsi());
    double td = time_best_of(2, [&] {
      milne::SolveOptions o;
      o.threads = 0;
      milne::solve(prob, small, o);
    });
    double tr = time_best_of(2, [&] { milne::solve_reference(prob, small, 1e-8, 2000); });
    std::printf("  accelerated %6.3f s\n", td);
    std::printf("  reference   %6.3f s   speedup %.1fx\n\n", tr, tr / td);
  }

  {
    geometry::Geometry geom = geometry::Geometry::disk(1.0);
    transport::DiskGrid grid;
    grid.r.resize(49);
    for (int i = 0; i <= 48; ++i) grid.r[i] = i / 48.0;
    grid.ntheta = 32;
    grid.nalpha = 32;
    transport::Problem prob{geom, 0.1,
                            [](const Vec3& x0, const Vec3&) { return 1.0 + 0.3 * x0.x; },
                            nullptr};
    std::vector<double> ubar(grid.nspatial(), 0.5);
    std::printf("transport sweep, disk %zux%dx%d\n", grid.r.size(), grid.ntheta, grid.nalpha);
    double ts = time_best_of(3,
                             [&] { transport::sweep_full(prob, grid, ubar, 1.0, {}, 0.0, 0.0, 1); });
    double tp = time_best_of(3,
                             [&] { transport::sweep_full(prob, grid, ubar, 1.0, {}, 0.0, 0.0, 0); });
    std::printf("  serial    %8.3f ms\n", ts * 1e3);
    std::printf("  parallel  %8.3f ms   speedup %.2fx\n", tp * 1e3, ts / tp);
  }
  return 0;
}

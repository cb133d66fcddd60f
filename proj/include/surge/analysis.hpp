#pragma once

// Post-processing of trajectories and closed-loop structure: Lyapunov
// derivatives, equilibria, settling times, trajectory distances, sampling of
// the initial-condition box, and the partial-feedback baseline gain search.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "surge/control.hpp"
#include "surge/sim.hpp"

namespace surge {

struct VdotSample {
  double t = 0.0;
  double vdot = 0.0;                 // grad V . x'
  double vdot_fd = 0.0;              // finite difference of the recorded V
  std::optional<double> vbardot;     // analytic, extended modes only
  std::optional<double> vbardot_fd;
};

/// Analytic derivatives of V (and Vbar) along the recorded trajectory with a
/// finite-difference cross-check on the sample grid.
std::vector<VdotSample> vdot_along(const Trajectory& tr, const ControllerGains& g,
                                   const PlantParams& p);

struct Box3 {
  Vec3 lower;
  Vec3 upper;
  bool contains(const Vec3& v, double tol = 0.0) const;
};

/// Omega_0: R in [0, 0.1], phi in [-0.1, 0.1], psi in [-0.5, 0.5].
Box3 omega0_box();

/// Region used for equilibrium searches and membership tests.
struct RegionSpec {
  enum class Kind { stall_halfspace, omega0, sublevel };
  Kind kind = Kind::stall_halfspace;
  /// Search box; the half-space R >= 0 is truncated to it.
  Box3 box{Vec3(0.0, -1.0, -1.5), Vec3(1.0, 1.0, 1.5)};
  /// Level c of {V <= c, R >= 0} for the sublevel kind.
  double level = 0.0;

  static RegionSpec stall_halfspace();
  static RegionSpec omega0();
  static RegionSpec sublevel(double c, const Box3& box);
  bool contains(const ShiftedState& x, const ControllerGains& g) const;
};

struct Equilibrium {
  ShiftedState x;
  double residual = 0.0;
};

struct EquilibriumOptions {
  int grid = 20;                // starting points per axis
  double residual_tol = 1e-10;
  double dedup_tol = 1e-8;
  int max_iter = 400;
  double u_open = 0.0;
};

struct EquilibriumReport {
  std::vector<Equilibrium> equilibria;
  std::size_t starts = 0;
  std::size_t nonconvergent = 0;  // starts that never met the residual tolerance
};

/// Damped Newton from a grid over the region; roots with R < 0 are discarded.
/// Only the three-state modes are supported.
EquilibriumReport find_equilibria(Mode m, const ControllerGains& g, const RegionSpec& region,
                                  const PlantParams& p, const EquilibriumOptions& opt = {});

/// First time after which signal[i] stays below threshold; nullopt if the
/// final sample is not below it.
std::optional<double> settling_time(const std::vector<double>& t, const std::vector<double>& signal,
                                    double threshold);
/// Settling of |x(t)|.
std::optional<double> settling_time(const Trajectory& tr, double threshold);
/// Settling of |xhat(t) - x(t)| (output feedback only).
std::optional<double> estimation_settling_time(const Trajectory& tr, double threshold);

/// sup_t |x_a(t) - x_b(t)| over the common time span, b linearly interpolated
/// onto a's samples.
double sup_distance(const Trajectory& a, const Trajectory& b);

/// n points of the base-2/3/5 Halton sequence mapped into the box, optionally
/// preceded by the box point closest to the origin.
std::vector<ShiftedState> halton_points(const Box3& box, std::size_t n, bool origin_first);

struct BaselineSearchResult {
  bool found = false;
  double d1 = 0.0;
  double d2 = 0.0;
  ShiftedState stalled_end;   // terminal state from the stall-prone start
  ShiftedState clean_end;     // terminal state from the R = 0 start
  std::vector<std::string> log;
};

/// Scans (d1, d2) over the grid, d1 outer, for a pair under which the
/// partial-state loop keeps the origin attracting on R = 0 while the start
/// x_stall settles with R above r_min.
BaselineSearchResult search_baseline_gains(const ShiftedState& x_stall, const std::vector<double>& d1s,
                                           const std::vector<double>& d2s, const ControllerGains& g,
                                           const PlantParams& p, double t_final = 200.0,
                                           double r_min = 0.01);

}  // namespace surge

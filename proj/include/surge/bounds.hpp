#pragma once

// Offline estimation of the observer cube from state-feedback trajectories.

#include <string>
#include <vector>

#include "surge/control.hpp"
#include "surge/observer.hpp"
#include "surge/sim.hpp"

namespace surge {

struct BoundEstimateOptions {
  Mode mode = Mode::extended_sf;
  double t_final = 5.0;
  double margin = 0.1;        // fraction of each observed range added on both sides
  double margin_floor = 1e-6;
  double h = 1e-5;
  double output_dt = 1e-3;
};

struct BoundEstimate {
  CubeBounds bounds;          // direct convention
  Vec3 observed_min = Vec3::Zero();  // (psi, phi, w)
  Vec3 observed_max = Vec3::Zero();
  std::size_t runs = 0;
  std::vector<std::string> failures;  // one entry per non-convergent start

  bool ok() const { return failures.empty(); }
};

/// Simulates the state-feedback loop from every start and returns the box
/// enclosing (psi, phi, w) along all trajectories, widened by the margin.
/// A start whose trajectory raises its Lyapunov function, diverges or
/// throws is reported in failures.
BoundEstimate estimate_cube_bounds(const std::vector<ShiftedState>& starts, const ControllerGains& g,
                                   const PlantParams& p, const BoundEstimateOptions& opt = {});

}  // namespace surge

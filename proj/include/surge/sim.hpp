#pragma once

// Closed-loop simulation of the shifted plant under each controller, with the
// observer-based output feedback loop integrated by RK4 and face events.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "surge/control.hpp"
#include "surge/model.hpp"
#include "surge/observer.hpp"

namespace surge {

enum class Mode { open_loop, partial_sf, full_sf, extended_sf, output_feedback };
enum class IntegratorKind { rk4, rk45, rosenbrock };

const char* to_string(Mode m);
const char* to_string(IntegratorKind k);
/// Throws std::invalid_argument for unknown names.
Mode parse_mode(const std::string& s);
IntegratorKind parse_integrator(const std::string& s);

/// rk4 for the observer loop, rosenbrock otherwise.
IntegratorKind default_integrator(Mode m);

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  Mode mode = Mode::full_sf;
  double t_final = 10.0;
  std::optional<IntegratorKind> integrator;
  double h = 1e-5;  // fixed step for rk4, initial step otherwise
  double abstol = 1e-9;
  double reltol = 1e-9;
  double h_max = 0.1;
  ShiftedState x0{0.05, 0.05, -0.2};
  double z1_0 = 0.0;
  double z2_0 = 0.0;
  ShiftedState xhat0{0.05, 0.0, 0.0};
  double u_open = 0.0;
  /// Minimum spacing of recorded samples; 0 records every accepted step.
  double output_dt = 0.0;
  /// Stop once |x| drops below this (0 disables).
  double stop_norm = 0.0;
  /// Additive noise on the psi measurement, as a function of time.
  std::function<double(double)> measurement_noise;

  IntegratorKind integrator_or_default() const {
    return integrator ? *integrator : default_integrator(mode);
  }
  /// Throws std::invalid_argument for inconsistent settings.
  void validate() const;
};

struct Sample {
  double t = 0.0;
  ShiftedState x;
  double z1 = 0.0;
  double z2 = 0.0;
  std::optional<ShiftedState> xhat;
  double u = 0.0;                  // applied throttle input, shifted
  std::optional<double> v;         // integrator-chain input
  std::optional<double> gamma;     // throttle opening when Psi > 0
  double V = 0.0;
  std::optional<double> Vbar;
  std::optional<ObservableCoords> xi_hat;
};

struct SimDiagnostics {
  std::size_t steps = 0;
  std::size_t rejected_steps = 0;
  std::size_t face_events = 0;      // steps shortened to land on a cube face
  std::size_t forced_snaps = 0;     // snaps beyond snap_tol after event location gave up
  double max_cube_violation = 0.0;  // largest exceedance before any snap
  double max_snap = 0.0;
  std::size_t r_clamps = 0;
  double stiffness_estimate = 0.0;  // spectral radius of the closed-loop Jacobian at t = 0
  bool stopped_at_norm = false;
  std::vector<std::string> warnings;
};

struct Trajectory {
  Mode mode = Mode::full_sf;
  std::vector<Sample> samples;
  SimDiagnostics diag;

  const Sample& back() const { return samples.back(); }
  bool has_extended() const { return mode == Mode::extended_sf || mode == Mode::output_feedback; }
};

/// Runs one scenario. `obs` is required for output feedback and ignored
/// otherwise. Throws SimulationError on divergence, negative R beyond the
/// clamp window or an observer singularity.
Trajectory simulate(const SimConfig& cfg, const ControllerGains& gains, const PlantParams& p,
                    const ObserverConfig* obs = nullptr);

/// Applied throttle input for a plant-only mode.
double state_feedback_input(Mode m, const ShiftedState& x, const ControllerGains& g,
                            const PlantParams& p, double u_open = 0.0);

/// Closed-loop vector field and its analytic Jacobian for the three-state modes.
Vec3 closed_loop_rhs(Mode m, const ShiftedState& x, const ControllerGains& g, const PlantParams& p,
                     double u_open = 0.0);
Mat3 closed_loop_jacobian(Mode m, const ShiftedState& x, const ControllerGains& g,
                          const PlantParams& p);

/// R values in [-kClampWindow, 0) are reset to 0 after a step.
inline constexpr double kClampWindow = 1e-9;

}  // namespace surge

#pragma once

#include <array>
#include <string>

#include "surge/model.hpp"

namespace surge {

struct ControllerGains {
  double k1 = 25.0;
  double k2 = 1.1e5;
  double C = 0.26;
  double k3 = 1.0;
  double k4 = 1.0;
  double d1 = 0.5;
  double d2 = 0.5;
};

/// One sufficient condition of the stability certificate, evaluated as lhs > rhs.
struct GainCondition {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

struct GainReport {
  // Order: k1 lower bound, quadratic-form determinant, k2 lower bound, C lower bound.
  std::array<GainCondition, 4> conditions;
  Eigen::Matrix2d quadratic_form = Eigen::Matrix2d::Zero();
  Eigen::Vector2d form_eigenvalues = Eigen::Vector2d::Zero();
  bool form_positive_definite = false;
  /// Determinant and C conditions together must agree with the eigenvalue test.
  bool form_consistent = false;

  bool pass() const;
};

/// Evaluates the sufficient gain conditions for (k1, k2, C) and the 2x2
/// quadratic form in (R, phi^2) whose positive definiteness they encode.
GainReport check_gains(double k1, double k2, double C, const PlantParams& p);

/// u = (1 - beta^2 k1 k2) phi + beta^2 k2 psi + 3 beta^2 k1 R phi.
double full_state_feedback(const ShiftedState& x, const ControllerGains& g, const PlantParams& p);

/// u = d1 psi - d2 phi (pressure and flow feedback only).
double partial_state_feedback(const ShiftedState& x, double d1, double d2);

/// V = C R + phi^2/2 + k1 phi^4/8 + (psi - k1 phi)^2 / 2. Rejects R < 0.
double lyapunov_V(const ShiftedState& x, const ControllerGains& g);

Vec3 grad_V(const ShiftedState& x, const ControllerGains& g);
Vec3 grad_ubar(const ShiftedState& x, const ControllerGains& g, const PlantParams& p);
/// Hessian of the full-state law; only the (R, phi) cross term is nonzero.
Mat3 hess_ubar(const ShiftedState& x, const ControllerGains& g, const PlantParams& p);

/// Everything the integrator-backstepping law needs at one extended state.
struct BacksteppingTerms {
  double ubar = 0.0;
  double z1_tilde = 0.0;  // z1 - ubar
  double alpha = 0.0;
  double z2_tilde = 0.0;  // z2 - alpha
  Vec3 dalpha_dx = Vec3::Zero();
  double dalpha_dz1 = 0.0;
  double alpha_dot = 0.0;
  double v = 0.0;
};

double backstepping_alpha(const ShiftedState& x, double z1, const ControllerGains& g,
                          const PlantParams& p);

/// Closed-form alpha, its gradient, alpha_dot along the extended flow, and v.
BacksteppingTerms backstepping_terms(const ExtendedState& e, const ControllerGains& g,
                                     const PlantParams& p);

/// v = alpha_dot - (z1 - ubar) - k4 (z2 - alpha).
double backstepping_v(const ExtendedState& e, const ControllerGains& g, const PlantParams& p);

/// Vbar = V + (z1 - ubar)^2 / 2 + (z2 - alpha)^2 / 2.
double lyapunov_Vbar(const ExtendedState& e, const ControllerGains& g, const PlantParams& p);

}  // namespace surge

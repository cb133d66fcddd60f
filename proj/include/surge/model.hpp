#pragma once

// Moore-Greitzer three-state compressor model, in physical and shifted
// coordinates, plus the plant extended by two input-side integrators.

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace surge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Raised when a state lies outside the region where the model is defined
/// (negative stall amplitude, nonpositive plenum pressure, ...).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Slack on R >= 0 at API boundaries; anything below is rejected.
inline constexpr double kStallAmplitudeTolerance = 1e-12;

struct PlantParams {
  double sigma = 7.0;
  double beta = 1.0 / std::sqrt(2.0);
  double psi_c0 = 0.0;

  double beta2() const { return beta * beta; }
  double inv_beta2() const { return 1.0 / (beta * beta); }

  /// Throws DomainError unless sigma > 0 and beta > 0.
  void validate() const;
};

/// Unshifted plant state: stall amplitude, mass flow, plenum pressure rise.
struct PlantState {
  double R = 0.0;
  double Phi = 0.0;
  double Psi = 0.0;
};

/// State relative to the peak of the compressor characteristic.
struct ShiftedState {
  double R = 0.0;
  double phi = 0.0;
  double psi = 0.0;

  Vec3 vec() const { return {R, phi, psi}; }
  static ShiftedState from(const Vec3& v) { return {v(0), v(1), v(2)}; }
  double norm() const { return vec().norm(); }
};

/// Plant plus integrator chain z1' = z2, z2' = v with applied input u = z1.
struct ExtendedState {
  ShiftedState x;
  double z1 = 0.0;
  double z2 = 0.0;
};

struct AffineSplit {
  Vec3 drift;      // f(x)
  Vec3 input_dir;  // g(x)
};

PlantState unshift(const ShiftedState& x, const PlantParams& p);
ShiftedState shift(const PlantState& s, const PlantParams& p);

/// Psi_C(Phi) = psi_c0 + 1 + 1.5 Phi - 0.5 Phi^3.
double compressor_char(double Phi, const PlantParams& p);

/// Throttle opening gamma from Psi = (1 + Phi_T)^2 / gamma. Throws DomainError
/// for Psi <= 0.
double throttle_gamma(double Phi_T, double Psi);

/// Time derivative of the unshifted plant under throttle flow Phi_T.
PlantState mg3_derivative(const PlantState& s, double Phi_T, const PlantParams& p);

/// Time derivative in shifted coordinates under u = Phi_T - 1.
ShiftedState shifted_derivative(const ShiftedState& x, double u, const PlantParams& p);

/// Drift/input split x' = f(x) + g(x) u. g is constant, (0, 0, -1/beta^2).
AffineSplit split_affine(const ShiftedState& x, const PlantParams& p);

/// Jacobian of the drift f with respect to (R, phi, psi).
Mat3 drift_jacobian(const ShiftedState& x, const PlantParams& p);

ExtendedState extended_derivative(const ExtendedState& e, double v, const PlantParams& p);

/// -psi - 1.5 phi^2 - 0.5 phi^3 - 3 R phi - 3 R, i.e. phi' without the
/// throttle; the quantity bounded by the third side of the observer cube.
double flow_acceleration_term(const ShiftedState& x);

/// Throws DomainError if x.R < -kStallAmplitudeTolerance.
void require_nonnegative_stall(const ShiftedState& x, const char* where);

}  // namespace surge

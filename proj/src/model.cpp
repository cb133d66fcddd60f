#include "surge/model.hpp"

#include <string>

namespace surge {

void PlantParams::validate() const {
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  if (!(beta > 0.0)) throw DomainError("beta must be positive");
}

PlantState unshift(const ShiftedState& x, const PlantParams& p) {
  return {x.R, x.phi + 1.0, x.psi + p.psi_c0 + 2.0};
}

ShiftedState shift(const PlantState& s, const PlantParams& p) {
  return {s.R, s.Phi - 1.0, s.Psi - p.psi_c0 - 2.0};
}

double compressor_char(double Phi, const PlantParams& p) {
  return p.psi_c0 + 1.0 + 1.5 * Phi - 0.5 * Phi * Phi * Phi;
}

double throttle_gamma(double Phi_T, double Psi) {
  if (!(Psi > 0.0)) {
    throw DomainError("throttle characteristic needs positive pressure rise, got " +
                      std::to_string(Psi));
  }
  const double q = 1.0 + Phi_T;
  return q * q / Psi;
}

PlantState mg3_derivative(const PlantState& s, double Phi_T, const PlantParams& p) {
  if (s.R < -kStallAmplitudeTolerance) throw DomainError("mg3_derivative: R < 0");
  PlantState d;
  d.Phi = -s.Psi + compressor_char(s.Phi, p) - 3.0 * s.Phi * s.R;
  d.Psi = p.inv_beta2() * (s.Phi - Phi_T);
  d.R = p.sigma * s.R * (1.0 - s.Phi * s.Phi - s.R);
  return d;
}

double flow_acceleration_term(const ShiftedState& x) {
  const double phi2 = x.phi * x.phi;
  return -x.psi - 1.5 * phi2 - 0.5 * phi2 * x.phi - 3.0 * x.R * x.phi - 3.0 * x.R;
}

ShiftedState shifted_derivative(const ShiftedState& x, double u, const PlantParams& p) {
  require_nonnegative_stall(x, "shifted_derivative");
  const AffineSplit fg = split_affine(x, p);
  return ShiftedState::from(fg.drift + fg.input_dir * u);
}

AffineSplit split_affine(const ShiftedState& x, const PlantParams& p) {
  AffineSplit out;
  out.drift = {-p.sigma * x.R * x.R - p.sigma * x.R * (2.0 * x.phi + x.phi * x.phi),
               flow_acceleration_term(x), p.inv_beta2() * x.phi};
  out.input_dir = {0.0, 0.0, -p.inv_beta2()};
  return out;
}

Mat3 drift_jacobian(const ShiftedState& x, const PlantParams& p) {
  const double R = x.R;
  const double phi = x.phi;
  Mat3 J;
  // clang-format off
  J << -2.0 * p.sigma * R - p.sigma * (2.0 * phi + phi * phi), -p.sigma * R * (2.0 + 2.0 * phi), 0.0,
       -3.0 * phi - 3.0, -3.0 * phi - 1.5 * phi * phi - 3.0 * R, -1.0,
       0.0, p.inv_beta2(), 0.0;
  // clang-format on
  return J;
}

ExtendedState extended_derivative(const ExtendedState& e, double v, const PlantParams& p) {
  ExtendedState d;
  d.x = shifted_derivative(e.x, e.z1, p);
  d.z1 = e.z2;
  d.z2 = v;
  return d;
}

void require_nonnegative_stall(const ShiftedState& x, const char* where) {
  if (x.R < -kStallAmplitudeTolerance) {
    throw DomainError(std::string(where) + ": stall amplitude R = " + std::to_string(x.R) +
                      " is negative");
  }
}

}  // namespace surge

#include "surge/control.hpp"

#include <limits>

#include <Eigen/Eigenvalues>

namespace surge {

bool GainReport::pass() const {
  for (const auto& c : conditions) {
    if (!c.holds) return false;
  }
  return form_positive_definite && form_consistent;
}

GainReport check_gains(double k1, double k2, double C, const PlantParams& p) {
  GainReport r;
  const double cs = C * p.sigma;
  const double kb = k1 - 9.0 / 8.0;

  auto set = [](GainCondition& c, std::string name, double lhs, double rhs) {
    c.name = std::move(name);
    c.lhs = lhs;
    c.rhs = rhs;
    c.holds = lhs > rhs;
  };

  set(r.conditions[0], "k1 > 17/8 + (2 C sigma + 3)^2 / 2", k1,
      17.0 / 8.0 + 0.5 * (2.0 * cs + 3.0) * (2.0 * cs + 3.0));

  const double det_poly = (cs - 105.0 / 64.0) * k1 * k1 +
                          0.75 * (-0.5 * cs + 21.0 / 4.0) * k1 - (cs + 3.0) * (cs + 3.0);
  set(r.conditions[1], "(C sigma - 105/64) k1^2 + 3/4 (21/4 - C sigma / 2) k1 - (C sigma + 3)^2 > 0",
      det_poly, 0.0);

  // 9 k1 / (4 k1 - 9/2) is only a bound when 4 k1 > 9/2.
  const double k2_rhs = (4.0 * k1 - 4.5 > 0.0)
                            ? k1 + 2.25 * k1 * k1 + 9.0 * k1 / (4.0 * k1 - 4.5) +
                                  0.25 * (k1 * k1 - 1.0) * (k1 * k1 - 1.0)
                            : std::numeric_limits<double>::infinity();
  set(r.conditions[2], "k2 > k1 + 9/4 k1^2 + 9 k1 / (4 k1 - 9/2) + (k1^2 - 1)^2 / 4", k2, k2_rhs);

  set(r.conditions[3], "C > 3 / (2 sigma)", C, 1.5 / p.sigma);

  const double off = 0.5 * (cs + 3.0 - 0.375 * k1);
  r.quadratic_form << cs - 1.5, off, off, 0.25 * k1 * kb;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(r.quadratic_form, Eigen::EigenvaluesOnly);
  r.form_eigenvalues = es.eigenvalues();
  r.form_positive_definite = r.form_eigenvalues.minCoeff() > 0.0;
  r.form_consistent =
      (r.conditions[1].holds && r.conditions[3].holds) == r.form_positive_definite;
  return r;
}

double full_state_feedback(const ShiftedState& x, const ControllerGains& g, const PlantParams& p) {
  const double b2 = p.beta2();
  return (1.0 - b2 * g.k1 * g.k2) * x.phi + b2 * g.k2 * x.psi + 3.0 * b2 * g.k1 * x.R * x.phi;
}

double partial_state_feedback(const ShiftedState& x, double d1, double d2) {
  return d1 * x.psi - d2 * x.phi;
}

double lyapunov_V(const ShiftedState& x, const ControllerGains& g) {
  require_nonnegative_stall(x, "lyapunov_V");
  const double phi2 = x.phi * x.phi;
  const double pt = x.psi - g.k1 * x.phi;
  return g.C * x.R + 0.5 * phi2 + g.k1 / 8.0 * phi2 * phi2 + 0.5 * pt * pt;
}

Vec3 grad_V(const ShiftedState& x, const ControllerGains& g) {
  const double pt = x.psi - g.k1 * x.phi;
  return {g.C, x.phi + 0.5 * g.k1 * x.phi * x.phi * x.phi - g.k1 * pt, pt};
}

Vec3 grad_ubar(const ShiftedState& x, const ControllerGains& g, const PlantParams& p) {
  const double b2 = p.beta2();
  return {3.0 * b2 * g.k1 * x.phi, 1.0 - b2 * g.k1 * g.k2 + 3.0 * b2 * g.k1 * x.R, b2 * g.k2};
}

Mat3 hess_ubar(const ShiftedState&, const ControllerGains& g, const PlantParams& p) {
  const double cross = 3.0 * p.beta2() * g.k1;
  Mat3 H = Mat3::Zero();
  H(0, 1) = cross;
  H(1, 0) = cross;
  return H;
}

double backstepping_alpha(const ShiftedState& x, double z1, const ControllerGains& g,
                          const PlantParams& p) {
  const AffineSplit fg = split_affine(x, p);
  const Vec3 flow = fg.drift + fg.input_dir * z1;
  const double LgV = grad_V(x, g).dot(fg.input_dir);
  return -g.k3 * (z1 - full_state_feedback(x, g, p)) - LgV + grad_ubar(x, g, p).dot(flow);
}

BacksteppingTerms backstepping_terms(const ExtendedState& e, const ControllerGains& g,
                                     const PlantParams& p) {
  const ShiftedState& x = e.x;
  const AffineSplit fg = split_affine(x, p);
  const Vec3 flow = fg.drift + fg.input_dir * e.z1;
  const Vec3 du = grad_ubar(x, g, p);
  const double c = p.inv_beta2();

  BacksteppingTerms t;
  t.ubar = full_state_feedback(x, g, p);
  t.z1_tilde = e.z1 - t.ubar;
  // -<dV/dx, g> = (psi - k1 phi) / beta^2
  t.alpha = -g.k3 * t.z1_tilde + c * (x.psi - g.k1 * x.phi) + du.dot(flow);

  // d/dx of -<dV/dx, g> is c * (0, -k1, 1); d/dx of <du, flow> is H_u flow + J_f^T du.
  t.dalpha_dx = g.k3 * du + c * Vec3(0.0, -g.k1, 1.0) + hess_ubar(x, g, p) * flow +
                drift_jacobian(x, p).transpose() * du;
  t.dalpha_dz1 = -g.k3 + du.dot(fg.input_dir);

  t.z2_tilde = e.z2 - t.alpha;
  t.alpha_dot = t.dalpha_dx.dot(flow) + t.dalpha_dz1 * e.z2;
  t.v = t.alpha_dot - t.z1_tilde - g.k4 * t.z2_tilde;
  return t;
}

double backstepping_v(const ExtendedState& e, const ControllerGains& g, const PlantParams& p) {
  return backstepping_terms(e, g, p).v;
}

double lyapunov_Vbar(const ExtendedState& e, const ControllerGains& g, const PlantParams& p) {
  const BacksteppingTerms t = backstepping_terms(e, g, p);
  return lyapunov_V(e.x, g) + 0.5 * t.z1_tilde * t.z1_tilde + 0.5 * t.z2_tilde * t.z2_tilde;
}

}  // namespace surge

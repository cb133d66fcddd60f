#include "surge/observer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace surge {

std::pair<double, double> CubeBounds::phi_interval() const {
  if (convention == CubeConvention::displayed) return {-a2, b2};
  return {a2, b2};
}

std::pair<double, double> CubeBounds::w_interval() const {
  if (convention == CubeConvention::displayed) return {-a3, b3};
  return {a3, b3};
}

void CubeBounds::validate() const {
  auto check = [](std::pair<double, double> iv, const char* what) {
    if (!std::isfinite(iv.first) || !std::isfinite(iv.second) || !(iv.first < iv.second)) {
      throw DomainError(std::string("cube interval for ") + what + " is empty: [" +
                        std::to_string(iv.first) + ", " + std::to_string(iv.second) + "]");
    }
  };
  check(psi_interval(), "psi");
  check(phi_interval(), "phi");
  check(w_interval(), "w");
  if (!(phi_interval().first > -1.0)) {
    throw DomainError("cube phi interval must stay above -1 (no mass flow is unobservable)");
  }
}

Mat3 observer_error_matrix(const Vec3& L) {
  Mat3 A;
  // clang-format off
  A << -L(0), 1.0, 0.0,
       -L(1), 0.0, 1.0,
       -L(2), 0.0, 0.0;
  // clang-format on
  return A;
}

ObserverGainDesign design_observer_gain(const Poles& poles) {
  for (const auto& s : poles) {
    if (!(s.real() < 0.0)) throw std::invalid_argument("observer poles must have negative real part");
  }
  // (s - p1)(s - p2)(s - p3) = s^3 + l1 s^2 + l2 s + l3
  const std::complex<double> e1 = poles[0] + poles[1] + poles[2];
  const std::complex<double> e2 = poles[0] * poles[1] + poles[0] * poles[2] + poles[1] * poles[2];
  const std::complex<double> e3 = poles[0] * poles[1] * poles[2];
  const double scale = 1.0 + std::abs(e1) + std::abs(e2) + std::abs(e3);
  if (std::abs(e1.imag()) + std::abs(e2.imag()) + std::abs(e3.imag()) > 1e-10 * scale) {
    throw std::invalid_argument("observer poles must come in conjugate pairs");
  }

  ObserverGainDesign d;
  d.L = Vec3(-e1.real(), e2.real(), -e3.real());

  const Mat3 A = observer_error_matrix(d.L);
  const Mat3 I = Mat3::Identity();
  Eigen::Matrix<double, 9, 9> K;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      // vec(P A) = (A^T kron I) vec(P), vec(A^T P) = (I kron A^T) vec(P)
      K.block<3, 3>(3 * i, 3 * j) = A(j, i) * I + I(i, j) * A.transpose();
    }
  }
  Eigen::Matrix<double, 9, 1> rhs = Eigen::Matrix<double, 9, 1>::Zero();
  rhs(0) = rhs(4) = rhs(8) = -1.0;
  const Eigen::Matrix<double, 9, 1> vp = K.fullPivLu().solve(rhs);
  Mat3 P = Eigen::Map<const Mat3>(vp.data());
  d.P = 0.5 * (P + P.transpose());

  Eigen::SelfAdjointEigenSolver<Mat3> es(d.P);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw std::invalid_argument("observer Lyapunov solution is not positive definite");
  }
  d.S = es.operatorSqrt();
  return d;
}

Mat3 projection_metric(const Mat3& P, double rho, GammaScaling scaling) {
  Mat3 Pinv = P.inverse();
  if (scaling == GammaScaling::identity) return 0.5 * (Pinv + Pinv.transpose());
  const Vec3 dinv(1.0, 1.0 / rho, 1.0 / (rho * rho));
  Mat3 G = dinv.asDiagonal() * Pinv * dinv.asDiagonal();
  return 0.5 * (G + G.transpose());
}

ObserverConfig make_observer_config(double rho, const Poles& poles, const CubeBounds& cube,
                                    GammaScaling scaling) {
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  cube.validate();
  const ObserverGainDesign d = design_observer_gain(poles);
  ObserverConfig cfg;
  cfg.rho = rho;
  cfg.L = d.L;
  cfg.P = d.P;
  cfg.S = d.S;
  cfg.Gamma = projection_metric(d.P, rho, scaling);
  cfg.cube = cube;
  cfg.scaling = scaling;
  return cfg;
}

ObservableCoords observability_map(const ShiftedState& x, const Vec2& z, const PlantParams& p) {
  const double c = p.inv_beta2();
  return {x.psi, -c * (z(0) - x.phi), c * (-z(1) + flow_acceleration_term(x))};
}

ShiftedState inverse_map(const ObservableCoords& xi, const Vec2& z, const PlantParams& p,
                         double eps_sing) {
  const double b2 = p.beta2();
  ShiftedState x;
  x.psi = xi.xi1;
  x.phi = z(0) + b2 * xi.xi2;
  const double q = 1.0 + x.phi;
  if (std::abs(q) < eps_sing) {
    throw SingularityError("observability map is singular at phi = -1 (phi = " +
                           std::to_string(x.phi) + ")");
  }
  const double phi2 = x.phi * x.phi;
  x.R = (-z(1) - x.psi - 1.5 * phi2 - 0.5 * phi2 * x.phi - b2 * xi.xi3) / (3.0 * q);
  return x;
}

Mat3 jacobian_H_x(const ShiftedState& x, const PlantParams& p) {
  const double c = p.inv_beta2();
  Mat3 J;
  // clang-format off
  J << 0.0, 0.0, 1.0,
       0.0, c, 0.0,
       -3.0 * c * (1.0 + x.phi), -c * (3.0 * x.phi + 1.5 * x.phi * x.phi + 3.0 * x.R), -c;
  // clang-format on
  return J;
}

Eigen::Matrix<double, 3, 2> jacobian_H_z(const PlantParams& p) {
  const double c = p.inv_beta2();
  Eigen::Matrix<double, 3, 2> J;
  // clang-format off
  J << 0.0, 0.0,
       -c, 0.0,
       0.0, -c;
  // clang-format on
  return J;
}

Vec3 solve_H_x(const ShiftedState& x, const Vec3& r, const PlantParams& p, double eps_sing) {
  const double c = p.inv_beta2();
  const double q = 1.0 + x.phi;
  if (std::abs(q) < eps_sing) {
    throw SingularityError("observability Jacobian is singular at phi = -1");
  }
  const double dpsi = r(0);
  const double dphi = r(1) / c;
  const double m32 = -c * (3.0 * x.phi + 1.5 * x.phi * x.phi + 3.0 * x.R);
  const double dR = (r(2) - m32 * dphi + c * dpsi) / (-3.0 * c * q);
  return {dR, dphi, dpsi};
}

ShiftedState observer_derivative(const ShiftedState& xhat, double psi_meas, double z1,
                                 const ObserverConfig& cfg, const PlantParams& p) {
  // The estimate may leave R >= 0 transiently, so the drift is used unchecked.
  const AffineSplit fg = split_affine(xhat, p);
  const Vec3 flow = fg.drift + fg.input_dir * z1;
  const double e = psi_meas - xhat.psi;
  const double r = cfg.rho;
  const Vec3 inj(cfg.L(0) / r * e, cfg.L(1) / (r * r) * e, cfg.L(2) / (r * r * r) * e);
  return ShiftedState::from(flow + solve_H_x(xhat, inj, p, cfg.eps_sing));
}

XiBox cube_box(const Vec2& z, const CubeBounds& cube, const PlantParams& p) {
  const double c = p.inv_beta2();
  const auto [psi_lo, psi_hi] = cube.psi_interval();
  const auto [phi_lo, phi_hi] = cube.phi_interval();
  const auto [w_lo, w_hi] = cube.w_interval();
  XiBox b;
  b.lower = Vec3(psi_lo, c * (phi_lo - z(0)), c * (w_lo - z(1)));
  b.upper = Vec3(psi_hi, c * (phi_hi - z(0)), c * (w_hi - z(1)));
  return b;
}

namespace {

int face_axis(Face f) { return static_cast<int>(f) / 2; }
bool face_upper(Face f) { return static_cast<int>(f) % 2 == 0; }

}  // namespace

double face_exceedance(Face f, const ObservableCoords& xi, const XiBox& box) {
  const int a = face_axis(f);
  const Vec3 v = xi.vec();
  return face_upper(f) ? v(a) - box.upper(a) : box.lower(a) - v(a);
}

CubeStatus cube_contains(const ObservableCoords& xi, const Vec2& z, const CubeBounds& cube,
                         const PlantParams& p, double eps_face) {
  const XiBox box = cube_box(z, cube, p);
  CubeStatus st;
  st.max_exceedance = -std::numeric_limits<double>::infinity();
  bool outside = false;
  for (Face f : kAllFaces) {
    const double e = face_exceedance(f, xi, box);
    st.max_exceedance = std::max(st.max_exceedance, e);
    if (e >= -eps_face) st.active.insert(f);
    if (e > eps_face) outside = true;
  }
  if (outside) {
    st.location = CubeLocation::outside;
  } else if (!st.active.empty()) {
    st.location = CubeLocation::boundary;
  } else {
    st.location = CubeLocation::inside;
  }
  return st;
}

FaceNormal face_normal(Face f, const PlantParams& p) {
  const double c = p.inv_beta2();
  const int a = face_axis(f);
  const double s = face_upper(f) ? 1.0 : -1.0;
  FaceNormal n;
  n.N(a) = s;
  if (a == 1) n.N_z(0) = s * c;
  if (a == 2) n.N_z(1) = s * c;
  return n;
}

std::optional<std::pair<Face, FaceNormal>> normals(const ObservableCoords& xi, const Vec2& z,
                                                   const CubeBounds& cube, const PlantParams& p,
                                                   double eps_face) {
  const CubeStatus st = cube_contains(xi, z, cube, p, eps_face);
  for (Face f : kAllFaces) {
    if (st.active.contains(f)) return std::make_pair(f, face_normal(f, p));
  }
  return std::nullopt;
}

double face_normal_velocity(Face f, const Vec3& xi_dot, const Vec2& z_dot, const PlantParams& p) {
  const FaceNormal n = face_normal(f, p);
  return n.N.dot(xi_dot) + n.N_z.dot(z_dot);
}

ProjectionResult project_derivative(const ShiftedState& xhat, const ShiftedState& xhat_dot_raw,
                                    const Vec2& z, const Vec2& z_dot, const ObserverConfig& cfg,
                                    const PlantParams& p, FaceSet held) {
  const ObservableCoords xi = observability_map(xhat, z, p);
  const Mat3 Jx = jacobian_H_x(xhat, p);
  const Eigen::Matrix<double, 3, 2> Jz = jacobian_H_z(p);
  Vec3 xi_dot = Jx * xhat_dot_raw.vec() + Jz * z_dot;

  const CubeStatus st = cube_contains(xi, z, cfg.cube, p, cfg.eps_face);
  const FaceSet candidates = st.active | held;

  ProjectionResult out;
  out.xhat_dot = xhat_dot_raw;
  if (candidates.empty()) return out;

  const Mat3& G = cfg.Gamma;
  const double vtol = 1e-12 * (1.0 + xi_dot.norm() + z_dot.norm());

  // Sequential single-face projections, repeated until no candidate face
  // has outward velocity.
  constexpr int kMaxPasses = 8;
  bool clean = false;
  for (int pass = 0; pass < kMaxPasses && !clean; ++pass) {
    clean = true;
    for (Face f : kAllFaces) {
      if (!candidates.contains(f)) continue;
      const FaceNormal n = face_normal(f, p);
      const double vel = n.N.dot(xi_dot) + n.N_z.dot(z_dot);
      if (vel <= 0.0) continue;
      xi_dot -= G * n.N * (vel / n.N.dot(G * n.N));
      out.projected.insert(f);
      if (vel > vtol) clean = false;
    }
  }

  bool residual = false;
  for (Face f : kAllFaces) {
    if (candidates.contains(f) && face_normal_velocity(f, xi_dot, z_dot, p) > vtol) residual = true;
  }
  if (residual) {
    // Equality projection on every face touched so far, one face per axis.
    std::vector<Face> act;
    for (int a = 0; a < 3; ++a) {
      const Face up = static_cast<Face>(2 * a);
      const Face lo = static_cast<Face>(2 * a + 1);
      const bool use_up = out.projected.contains(up) || candidates.contains(up);
      const bool use_lo = out.projected.contains(lo) || candidates.contains(lo);
      if (use_up && use_lo) {
        act.push_back(face_normal_velocity(up, xi_dot, z_dot, p) >= 0.0 ? up : lo);
      } else if (use_up) {
        act.push_back(up);
      } else if (use_lo) {
        act.push_back(lo);
      }
    }
    const int m = static_cast<int>(act.size());
    Eigen::MatrixXd N(3, m);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) {
      const FaceNormal n = face_normal(act[i], p);
      N.col(i) = n.N;
      b(i) = n.N.dot(xi_dot) + n.N_z.dot(z_dot);
      out.projected.insert(act[i]);
    }
    const Eigen::MatrixXd M = N.transpose() * G * N;
    const Eigen::VectorXd lambda = M.ldlt().solve(b);
    xi_dot -= G * N * lambda;
  }

  out.xhat_dot = ShiftedState::from(solve_H_x(xhat, xi_dot - Jz * z_dot, p, cfg.eps_sing));
  return out;
}

}  // namespace surge

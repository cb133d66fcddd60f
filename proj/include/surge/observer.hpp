#pragma once

// High-gain observer for the shifted plant with derivative projection onto a
// moving box in observable coordinates xi = H(x, z).

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <utility>

#include "surge/model.hpp"

namespace surge {

/// Raised at the unobservable manifold phi = -1 (no mass flow).
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How the six cube numbers are read.
///  direct:    a1 <= psi <= b1,  a2 <= phi <= b2,  a3 <= w <= b3
///  displayed: a1 <= psi <= b1, -a2 <= phi <= b2, -a3 <= w <= b3
/// where w = flow_acceleration_term(x).
enum class CubeConvention { direct, displayed };

struct CubeBounds {
  double a1 = -2.0;
  double b1 = 1.0;
  double a2 = -0.5;
  double b2 = 1.0;
  double a3 = -0.5;
  double b3 = 0.3;
  CubeConvention convention = CubeConvention::direct;

  std::pair<double, double> psi_interval() const { return {a1, b1}; }
  std::pair<double, double> phi_interval() const;
  std::pair<double, double> w_interval() const;

  /// Throws DomainError for empty intervals or a phi interval reaching -1.
  void validate() const;
};

struct ObservableCoords {
  double xi1 = 0.0;
  double xi2 = 0.0;
  double xi3 = 0.0;

  Vec3 vec() const { return {xi1, xi2, xi3}; }
  static ObservableCoords from(const Vec3& v) { return {v(0), v(1), v(2)}; }
};

/// Metric used by the projection: identity gives Gamma = P^-1, high_gain gives
/// Gamma = D^-1 P^-1 D^-1 with D = diag(1, rho, rho^2).
enum class GammaScaling { identity, high_gain };

struct ObserverGainDesign {
  Vec3 L = Vec3::Zero();
  Mat3 P = Mat3::Zero();
  Mat3 S = Mat3::Zero();
};

struct ObserverConfig {
  double rho = 0.1;
  Vec3 L{6.0, 11.0, 6.0};
  Mat3 P = Mat3::Identity();
  Mat3 S = Mat3::Identity();
  Mat3 Gamma = Mat3::Identity();
  CubeBounds cube;
  GammaScaling scaling = GammaScaling::high_gain;
  double eps_face = 1e-9;
  double eps_sing = 1e-6;
  double snap_tol = 1e-8;
};

using Poles = std::array<std::complex<double>, 3>;

inline Poles default_observer_poles() { return {{{-1.0, 0.0}, {-2.0, 0.0}, {-3.0, 0.0}}}; }

/// Companion-form error matrix A_c - L C_c for the chain of three integrators.
Mat3 observer_error_matrix(const Vec3& L);

/// L from the characteristic polynomial with the requested roots, P from
/// P (A_c - L C_c) + (A_c - L C_c)^T P = -I, S = sqrt(P). Throws
/// std::invalid_argument for non-Hurwitz or non-conjugate poles.
ObserverGainDesign design_observer_gain(const Poles& poles);

Mat3 projection_metric(const Mat3& P, double rho, GammaScaling scaling);

ObserverConfig make_observer_config(double rho, const Poles& poles, const CubeBounds& cube,
                                    GammaScaling scaling = GammaScaling::high_gain);

ObservableCoords observability_map(const ShiftedState& x, const Vec2& z, const PlantParams& p);

/// Recovers (R, phi, psi); throws SingularityError when |1 + phi| < eps_sing.
ShiftedState inverse_map(const ObservableCoords& xi, const Vec2& z, const PlantParams& p,
                         double eps_sing = 1e-6);

Mat3 jacobian_H_x(const ShiftedState& x, const PlantParams& p);
Eigen::Matrix<double, 3, 2> jacobian_H_z(const PlantParams& p);

/// Solves jacobian_H_x(x) * d = r in closed form.
Vec3 solve_H_x(const ShiftedState& x, const Vec3& r, const PlantParams& p, double eps_sing = 1e-6);

/// Unprojected observer vector field driven by the measured psi and applied u = z1.
ShiftedState observer_derivative(const ShiftedState& xhat, double psi_meas, double z1,
                                 const ObserverConfig& cfg, const PlantParams& p);

// Faces of the cube, ordered by axis, upper face first.
enum class Face : std::uint8_t { xi1_upper, xi1_lower, xi2_upper, xi2_lower, xi3_upper, xi3_lower };
inline constexpr std::array<Face, 6> kAllFaces = {Face::xi1_upper, Face::xi1_lower,
                                                  Face::xi2_upper, Face::xi2_lower,
                                                  Face::xi3_upper, Face::xi3_lower};

class FaceSet {
 public:
  FaceSet() = default;
  void insert(Face f) { bits_ |= bit(f); }
  bool contains(Face f) const { return (bits_ & bit(f)) != 0; }
  bool empty() const { return bits_ == 0; }
  int size() const { return __builtin_popcount(bits_); }
  FaceSet operator|(FaceSet o) const { return FaceSet(static_cast<std::uint8_t>(bits_ | o.bits_)); }
  bool operator==(const FaceSet&) const = default;

 private:
  explicit FaceSet(std::uint8_t b) : bits_(b) {}
  static std::uint8_t bit(Face f) { return static_cast<std::uint8_t>(1u << static_cast<int>(f)); }
  std::uint8_t bits_ = 0;
};

/// The cube as a box in xi-space for the current integrator state.
struct XiBox {
  Vec3 lower;
  Vec3 upper;
};

XiBox cube_box(const Vec2& z, const CubeBounds& cube, const PlantParams& p);

/// Signed distance past face f (positive = outside).
double face_exceedance(Face f, const ObservableCoords& xi, const XiBox& box);

enum class CubeLocation { inside, boundary, outside };

struct CubeStatus {
  CubeLocation location = CubeLocation::inside;
  FaceSet active;  // faces within eps_face or beyond
  double max_exceedance = 0.0;
};

CubeStatus cube_contains(const ObservableCoords& xi, const Vec2& z, const CubeBounds& cube,
                         const PlantParams& p, double eps_face = 1e-9);

struct FaceNormal {
  Vec3 N = Vec3::Zero();
  Vec2 N_z = Vec2::Zero();
};

FaceNormal face_normal(Face f, const PlantParams& p);

/// Normals of the first active face in axis order, if any.
std::optional<std::pair<Face, FaceNormal>> normals(const ObservableCoords& xi, const Vec2& z,
                                                   const CubeBounds& cube, const PlantParams& p,
                                                   double eps_face = 1e-9);

struct ProjectionResult {
  ShiftedState xhat_dot;
  FaceSet projected;
};

/// Projects the observer velocity so the image H(xhat, z) cannot leave the
/// cube. Faces in `held` are treated as touching regardless of position.
ProjectionResult project_derivative(const ShiftedState& xhat, const ShiftedState& xhat_dot_raw,
                                    const Vec2& z, const Vec2& z_dot, const ObserverConfig& cfg,
                                    const PlantParams& p, FaceSet held = {});

/// Outward normal velocity N^T xi_dot + N_z^T z_dot for face f.
double face_normal_velocity(Face f, const Vec3& xi_dot, const Vec2& z_dot, const PlantParams& p);

}  // namespace surge

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "fd.hpp"
#include "surge/observer.hpp"

using namespace surge;
using surge_test::rel_norm;

namespace {

// The map written out by hand: output, flow mismatch, flow acceleration.
Eigen::VectorXd H_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& z, double b2) {
  const double R = x(0), phi = x(1), psi = x(2);
  Eigen::VectorXd xi(3);
  xi << psi, -(z(0) - phi) / b2,
      (-z(1) - psi - 1.5 * phi * phi - 0.5 * phi * phi * phi - 3 * R * phi - 3 * R) / b2;
  return xi;
}

ShiftedState sx(const Eigen::VectorXd& v) { return {v(0), v(1), v(2)}; }

Vec3 plant_velocity(const ShiftedState& x, double u, const PlantParams& p) {
  const AffineSplit fg = split_affine(x, p);
  return fg.drift + fg.input_dir * u;
}

ObserverConfig paper_config(double rho = 0.1) {
  return make_observer_config(rho, default_observer_poles(), CubeBounds{});
}

// With the default w interval the psi = 1 face is unreachable (w <= -psi
// there), so single-face checks use a wide w range.
CubeBounds wide_w_cube() {
  CubeBounds c;
  c.a3 = -5.0;
  c.b3 = 5.0;
  return c;
}

}  // namespace

TEST(ObserverGain, DefaultPoles) {
  const ObserverGainDesign d = design_observer_gain(default_observer_poles());
  EXPECT_NEAR(d.L(0), 6.0, 1e-14);
  EXPECT_NEAR(d.L(1), 11.0, 1e-14);
  EXPECT_NEAR(d.L(2), 6.0, 1e-14);
  const Mat3 A = observer_error_matrix(d.L);
  EXPECT_LT((d.P * A + A.transpose() * d.P + Mat3::Identity()).norm(), 1e-10);
  EXPECT_LT((d.S * d.S - d.P).norm(), 1e-10);
  EXPECT_LT((d.P - d.P.transpose()).norm(), 1e-14);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat3>(d.P).eigenvalues().minCoeff(), 0.0);
  // Characteristic polynomial of the error matrix has the requested roots.
  Eigen::EigenSolver<Mat3> es(A);
  std::vector<double> re;
  for (int i = 0; i < 3; ++i) {
    re.push_back(es.eigenvalues()(i).real());
    EXPECT_NEAR(es.eigenvalues()(i).imag(), 0.0, 1e-8);
  }
  std::sort(re.begin(), re.end());
  EXPECT_NEAR(re[0], -3.0, 1e-8);
  EXPECT_NEAR(re[1], -2.0, 1e-8);
  EXPECT_NEAR(re[2], -1.0, 1e-8);
}

TEST(ObserverGain, ComplexPair) {
  // (s + 2)(s^2 + 2s + 5) = s^3 + 4 s^2 + 9 s + 10
  const Poles poles = {{{-2.0, 0.0}, {-1.0, 2.0}, {-1.0, -2.0}}};
  const ObserverGainDesign d = design_observer_gain(poles);
  EXPECT_NEAR(d.L(0), 4.0, 1e-12);
  EXPECT_NEAR(d.L(1), 9.0, 1e-12);
  EXPECT_NEAR(d.L(2), 10.0, 1e-12);
  const Mat3 A = observer_error_matrix(d.L);
  EXPECT_LT((d.P * A + A.transpose() * d.P + Mat3::Identity()).norm(), 1e-10);
}

TEST(ObserverGain, RejectsBadPoles) {
  EXPECT_THROW(design_observer_gain({{{1.0, 0.0}, {-2.0, 0.0}, {-3.0, 0.0}}}), std::invalid_argument);
  EXPECT_THROW(design_observer_gain({{{0.0, 0.0}, {-2.0, 0.0}, {-3.0, 0.0}}}), std::invalid_argument);
  EXPECT_THROW(design_observer_gain({{{-1.0, 1.0}, {-2.0, 0.0}, {-3.0, 0.0}}}), std::invalid_argument);
}

TEST(ObserverGain, ProjectionMetric) {
  const ObserverGainDesign d = design_observer_gain(default_observer_poles());
  EXPECT_LT((projection_metric(d.P, 0.1, GammaScaling::identity) - d.P.inverse()).norm(), 1e-12);
  const Mat3 G = projection_metric(d.P, 0.1, GammaScaling::high_gain);
  const Mat3 Dinv = Vec3(1.0, 10.0, 100.0).asDiagonal();
  EXPECT_LT(rel_norm(G, Dinv * d.P.inverse() * Dinv), 1e-12);
  EXPECT_THROW(make_observer_config(0.0, default_observer_poles(), CubeBounds{}), std::invalid_argument);
}

TEST(ObservabilityMap, Examples) {
  PlantParams p;
  const ObservableCoords a = observability_map({0, 0, 0}, Vec2::Zero(), p);
  EXPECT_EQ(a.vec(), Vec3::Zero());
  const ObservableCoords b = observability_map({0, 0.3, 0}, Vec2::Zero(), p);
  EXPECT_NEAR(b.xi2, 0.6, 1e-15);
  const ShiftedState x = inverse_map({0, 0, 0}, Vec2::Zero(), p);
  EXPECT_EQ(x.vec(), Vec3::Zero());
}

TEST(ObservabilityMap, RoundTripAndOracle) {
  PlantParams p;
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> U(-0.9, 1.0);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd x(3), z(2);
    x << std::abs(U(rng)), U(rng), 2.0 * U(rng);
    z << U(rng), U(rng);
    const ObservableCoords xi = observability_map(sx(x), z, p);
    EXPECT_LT(rel_norm(xi.vec(), H_oracle(x, z, p.beta2())), 1e-14);
    const ShiftedState back = inverse_map(xi, z, p);
    EXPECT_LT((back.vec() - x).norm(), 1e-10);
  }
}

TEST(ObservabilityMap, SingularAtZeroFlow) {
  PlantParams p;
  const Vec2 z(0.0, 0.0);
  // Recovered phi = z1 + beta^2 xi2 = -1.
  EXPECT_THROW(inverse_map({0.0, -2.0, 0.0}, z, p), SingularityError);
  EXPECT_THROW(solve_H_x({0.0, -1.0, 0.0}, Vec3(1, 1, 1), p), SingularityError);
  EXPECT_NO_THROW(inverse_map({0.0, -1.9, 0.0}, z, p));
}

TEST(ObservabilityMap, JacobiansMatchFiniteDifferences) {
  PlantParams p;
  const double b2 = p.beta2();
  std::mt19937 rng(22);
  std::uniform_real_distribution<double> U(-0.9, 1.0);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd x(3), z(2);
    x << std::abs(U(rng)), U(rng), U(rng);
    z << U(rng), U(rng);
    const Eigen::MatrixXd Jx = surge_test::fd_jacobian(
        [&](const Eigen::VectorXd& y) { return H_oracle(y, z, b2); }, x);
    const Eigen::MatrixXd Jz = surge_test::fd_jacobian(
        [&](const Eigen::VectorXd& w) { return H_oracle(x, w, b2); }, z);
    EXPECT_LT(rel_norm(jacobian_H_x(sx(x), p), Jx), 1e-6);
    EXPECT_LT(rel_norm(jacobian_H_z(p), Jz), 1e-6);
    const double det = jacobian_H_x(sx(x), p).determinant();
    EXPECT_NEAR(std::abs(det), 3.0 * std::abs(1.0 + x(1)) / (b2 * b2), 1e-9);
    // The closed-form solve inverts the Jacobian.
    const Vec3 r(U(rng), U(rng), U(rng));
    EXPECT_LT((jacobian_H_x(sx(x), p) * solve_H_x(sx(x), r, p) - r).norm(), 1e-10);
  }
}

TEST(ObservabilityMap, JacobianAtOriginAndDeterminantNearSingularity) {
  PlantParams p;
  const Mat3 J = jacobian_H_x({0, 0, 0}, p);
  Mat3 ref;
  ref << 0, 0, 1, 0, 2, 0, -6, 0, -2;
  EXPECT_LT((J - ref).norm(), 1e-14);
  // Linear approach to zero as phi -> -1.
  for (double d : {1e-1, 1e-2, 1e-3}) {
    EXPECT_NEAR(std::abs(jacobian_H_x({0.1, -1.0 + d, 0.2}, p).determinant()), 12.0 * d, 1e-9);
  }
}

TEST(ObserverDerivative, ZeroInnovationIsThePlant) {
  PlantParams p;
  const ObserverConfig cfg = paper_config();
  const ShiftedState x{0.1, 0.2, -0.3};
  const double z1 = 0.05;
  const ShiftedState d = observer_derivative(x, x.psi, z1, cfg, p);
  const ShiftedState ref = shifted_derivative(x, z1, p);
  EXPECT_LT((d.vec() - ref.vec()).norm(), 1e-14);
}

TEST(ObserverDerivative, InjectionScalesWithRho) {
  // The injected xi-rate is (l1/rho, l2/rho^2, l3/rho^3) e; mapped back to xi
  // it can be compared term by term.
  PlantParams p;
  const ShiftedState xh{0.1, 0.2, -0.3};
  const double z1 = 0.05, e = 0.01;
  auto injected = [&](double rho) {
    const ObserverConfig cfg = paper_config(rho);
    const ShiftedState d = observer_derivative(xh, xh.psi + e, z1, cfg, p);
    const ShiftedState f = observer_derivative(xh, xh.psi, z1, cfg, p);
    return Vec3(jacobian_H_x(xh, p) * (d.vec() - f.vec()));
  };
  const Vec3 a = injected(0.1);
  const Vec3 b = injected(0.2);
  EXPECT_NEAR(a(0), 6.0 / 0.1 * e, 1e-12);
  EXPECT_NEAR(a(1), 11.0 / 0.01 * e, 1e-10);
  EXPECT_NEAR(a(2), 6.0 / 0.001 * e, 1e-8);
  EXPECT_NEAR(b(2) / a(2), 1.0 / 8.0, 1e-12);
  EXPECT_NEAR(b(1) / a(1), 1.0 / 4.0, 1e-12);
  EXPECT_NEAR(b(0) / a(0), 1.0 / 2.0, 1e-12);
}

TEST(Cube, ContainsAndFaces) {
  PlantParams p;
  const CubeBounds cube;
  const Vec2 z = Vec2::Zero();
  const ObservableCoords o = observability_map({0, 0, 0}, z, p);
  EXPECT_EQ(cube_contains(o, z, cube, p).location, CubeLocation::inside);
  EXPECT_TRUE(cube_contains(o, z, cube, p).active.empty());

  const CubeStatus on = cube_contains({1.0, 0.0, 0.0}, z, cube, p);
  EXPECT_EQ(on.location, CubeLocation::boundary);
  EXPECT_TRUE(on.active.contains(Face::xi1_upper));
  EXPECT_EQ(on.active.size(), 1);
  EXPECT_EQ(cube_contains({2.0, 0.0, 0.0}, z, cube, p).location, CubeLocation::outside);
  EXPECT_EQ(cube_contains({1.0 + 5e-10, 0.0, 0.0}, z, cube, p).location, CubeLocation::boundary);
}

TEST(Cube, BoxTracksTheIntegratorState) {
  PlantParams p;
  const CubeBounds cube;
  const Vec2 z(0.3, -0.2);
  const XiBox b = cube_box(z, cube, p);
  // phi bounds map through xi2 = (phi - z1)/beta^2, w bounds through xi3 = (w - z2)/beta^2.
  EXPECT_NEAR(b.lower(1), 2.0 * (-0.5 - 0.3), 1e-15);
  EXPECT_NEAR(b.upper(1), 2.0 * (1.0 - 0.3), 1e-15);
  EXPECT_NEAR(b.lower(2), 2.0 * (-0.5 + 0.2), 1e-15);
  EXPECT_NEAR(b.upper(2), 2.0 * (0.3 + 0.2), 1e-15);
  // A state on the phi = -0.5 face lands on the xi2 lower face.
  const ShiftedState x{0.0, -0.5, 0.0};
  const CubeStatus st = cube_contains(observability_map(x, z, p), z, cube, p);
  EXPECT_TRUE(st.active.contains(Face::xi2_lower));
}

TEST(Cube, DisplayedConvention) {
  CubeBounds c;
  c.convention = CubeConvention::displayed;
  c.a2 = 0.5;
  c.a3 = 0.5;
  EXPECT_EQ(c.phi_interval(), std::make_pair(-0.5, 1.0));
  EXPECT_EQ(c.w_interval(), std::make_pair(-0.5, 0.3));
  EXPECT_NO_THROW(c.validate());
  c.a2 = 1.0;  // phi down to -1 leaves the observable region
  EXPECT_THROW(c.validate(), DomainError);
  CubeBounds d;
  d.b1 = d.a1;
  EXPECT_THROW(d.validate(), DomainError);
}

TEST(Cube, Normals) {
  PlantParams p;
  const double c = p.inv_beta2();
  const FaceNormal n1 = face_normal(Face::xi1_upper, p);
  EXPECT_EQ(n1.N, Vec3(1, 0, 0));
  EXPECT_EQ(n1.N_z, Vec2(0, 0));
  EXPECT_EQ(face_normal(Face::xi1_lower, p).N_z, Vec2(0, 0));
  const FaceNormal n2 = face_normal(Face::xi2_upper, p);
  EXPECT_EQ(n2.N, Vec3(0, 1, 0));
  EXPECT_EQ(n2.N_z, Vec2(c, 0));
  const FaceNormal n3 = face_normal(Face::xi3_lower, p);
  EXPECT_EQ(n3.N, Vec3(0, 0, -1));
  EXPECT_EQ(n3.N_z, Vec2(0, -c));

  const Vec2 z = Vec2::Zero();
  const auto got = normals({1.0, 0.0, 0.0}, z, CubeBounds{}, p);
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->first, Face::xi1_upper);
  EXPECT_FALSE(normals({0.0, 0.0, 0.0}, z, CubeBounds{}, p).has_value());
}

TEST(Cube, FaceNormalsFollowTheMovingBoundary) {
  // N^T xi_dot + N_z^T z_dot is the rate at which the state approaches a face
  // of the z-dependent box: check against a direct difference of exceedances.
  PlantParams p;
  const CubeBounds cube;
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (Face f : kAllFaces) {
    const Vec3 xi(U(rng), U(rng), U(rng)), xid(U(rng), U(rng), U(rng));
    const Vec2 z(0.1 * U(rng), 0.1 * U(rng)), zd(U(rng), U(rng));
    const double h = 1e-6;
    const double ep = face_exceedance(f, ObservableCoords::from(xi + h * xid),
                                      cube_box(z + h * zd, cube, p));
    const double em = face_exceedance(f, ObservableCoords::from(xi - h * xid),
                                      cube_box(z - h * zd, cube, p));
    EXPECT_NEAR(face_normal_velocity(f, xid, zd, p), (ep - em) / (2 * h), 1e-8);
  }
}

TEST(Projection, InteriorUnchanged) {
  PlantParams p;
  const ObserverConfig cfg = paper_config();
  const ShiftedState xh{0.05, 0.0, 0.0};
  const ShiftedState raw{0.3, -40.0, 12.0};
  const ProjectionResult r = project_derivative(xh, raw, Vec2(0.01, 0.02), Vec2(1.0, -3.0), cfg, p);
  EXPECT_TRUE(r.projected.empty());
  EXPECT_EQ(r.xhat_dot.vec(), raw.vec());
}

TEST(Projection, OutwardFlowOnFaceIsCancelled) {
  PlantParams p;
  for (GammaScaling sc : {GammaScaling::identity, GammaScaling::high_gain}) {
    const ObserverConfig cfg = make_observer_config(0.1, default_observer_poles(), wide_w_cube(), sc);
    const Vec2 z(0.02, -0.01), zd(0.5, -1.0);
    // psi on its upper bound, flowing up.
    const ShiftedState xh{0.01, 0.0, 1.0};
    const ShiftedState raw{0.0, 0.1, 3.0};
    const ProjectionResult r = project_derivative(xh, raw, z, zd, cfg, p);
    EXPECT_TRUE(r.projected.contains(Face::xi1_upper));
    const Vec3 xid = jacobian_H_x(xh, p) * r.xhat_dot.vec() + jacobian_H_z(p) * zd;
    EXPECT_NEAR(face_normal_velocity(Face::xi1_upper, xid, zd, p), 0.0, 1e-10);
    // The oblique projection matches the single-face formula.
    const Vec3 xi_raw = jacobian_H_x(xh, p) * raw.vec() + jacobian_H_z(p) * zd;
    const Vec3 N(1, 0, 0);
    const Vec3 ref = xi_raw - cfg.Gamma * N * (N.dot(xi_raw) / N.dot(cfg.Gamma * N));
    EXPECT_LT((xid - ref).norm(), 1e-10 * (1.0 + ref.norm()));
  }
}

TEST(Projection, MovingFaceOnPhiLowerBound) {
  // phihat = -0.5 with z1 moving: the xi2 face moves, so N_z matters.
  PlantParams p;
  const ObserverConfig cfg = paper_config();
  const Vec2 z(0.1, 0.0), zd(-2.0, 0.0);
  const ShiftedState xh{0.02, -0.5, 0.1};
  const ShiftedState raw{0.0, -1.0, 0.0};
  const ProjectionResult r = project_derivative(xh, raw, z, zd, cfg, p);
  EXPECT_TRUE(r.projected.contains(Face::xi2_lower));
  const Vec3 xid = jacobian_H_x(xh, p) * r.xhat_dot.vec() + jacobian_H_z(p) * zd;
  EXPECT_LE(face_normal_velocity(Face::xi2_lower, xid, zd, p), 1e-10);
  // On the phi face the projected estimate keeps phihat from decreasing.
  EXPECT_GE(r.xhat_dot.phi, -1e-10);
}

TEST(Projection, InwardFlowOnFaceUnchanged) {
  PlantParams p;
  const ObserverConfig cfg = make_observer_config(0.1, default_observer_poles(), wide_w_cube());
  const ShiftedState xh{0.01, 0.0, 1.0};
  const ShiftedState raw{0.0, 0.1, -3.0};
  const ProjectionResult r = project_derivative(xh, raw, Vec2::Zero(), Vec2::Zero(), cfg, p);
  EXPECT_TRUE(r.projected.empty());
  EXPECT_EQ(r.xhat_dot.vec(), raw.vec());
}

TEST(Projection, CornerLeavesNoOutwardVelocity) {
  PlantParams p;
  const ObserverConfig cfg = paper_config(0.02);
  const Vec2 z(0.0, 0.0), zd(0.3, 0.4);
  std::mt19937 rng(24);
  std::uniform_real_distribution<double> U(-50.0, 50.0);
  // psi = 1 and phi = -0.5 at once.
  const ShiftedState xh{0.05, -0.5, 1.0};
  for (int k = 0; k < 200; ++k) {
    const ShiftedState raw{U(rng), U(rng), U(rng)};
    const ProjectionResult r = project_derivative(xh, raw, z, zd, cfg, p);
    const Vec3 xid = jacobian_H_x(xh, p) * r.xhat_dot.vec() + jacobian_H_z(p) * zd;
    const CubeStatus st = cube_contains(observability_map(xh, z, p), z, cfg.cube, p);
    for (Face f : kAllFaces) {
      if (!st.active.contains(f)) continue;
      EXPECT_LE(face_normal_velocity(f, xid, zd, p), 1e-9 * (1.0 + xid.norm())) << k;
    }
  }
}

TEST(Projection, HeldFacesAreTreatedAsActive) {
  PlantParams p;
  const ObserverConfig cfg = make_observer_config(0.1, default_observer_poles(), wide_w_cube());
  const ShiftedState xh{0.01, 0.0, 1.0 - 1e-6};  // just inside
  const ShiftedState raw{0.0, 0.0, 3.0};
  FaceSet held;
  held.insert(Face::xi1_upper);
  EXPECT_TRUE(project_derivative(xh, raw, Vec2::Zero(), Vec2::Zero(), cfg, p).projected.empty());
  EXPECT_FALSE(project_derivative(xh, raw, Vec2::Zero(), Vec2::Zero(), cfg, p, held).projected.empty());
}

TEST(Projection, KeepsPlantVelocityWhenTrueStateInside) {
  // With xhat = x the raw field is the plant field; projecting it at an
  // interior point must agree with the plant.
  PlantParams p;
  const ObserverConfig cfg = paper_config();
  const ShiftedState x{0.05, 0.05, -0.2};
  const double u = 0.1;
  const ShiftedState raw = observer_derivative(x, x.psi, u, cfg, p);
  const ProjectionResult r = project_derivative(x, raw, Vec2(u, 0.0), Vec2(0.0, 0.0), cfg, p);
  EXPECT_LT((r.xhat_dot.vec() - plant_velocity(x, u, p)).norm(), 1e-14);
}

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fd.hpp"
#include "surge/model.hpp"

using namespace surge;

namespace {

// Physical-coordinate MG3 written out independently of the library.
Eigen::Vector3d mg3_oracle(double R, double Phi, double Psi, double Phi_T, double sigma,
                           double beta, double psi_c0) {
  const double Psi_C = psi_c0 + 1.0 + 1.5 * Phi - 0.5 * Phi * Phi * Phi;
  return {sigma * R * (1.0 - Phi * Phi - R), -Psi + Psi_C - 3.0 * Phi * R,
          (Phi - Phi_T) / (beta * beta)};
}

}  // namespace

TEST(Model, ShiftRoundTrip) {
  PlantParams p;
  p.psi_c0 = 0.3;
  const ShiftedState x{0.2, -0.1, 0.4};
  const ShiftedState y = shift(unshift(x, p), p);
  EXPECT_DOUBLE_EQ(y.R, x.R);
  EXPECT_NEAR(y.phi, x.phi, 1e-15);
  EXPECT_NEAR(y.psi, x.psi, 1e-15);
  const PlantState s = unshift({0.0, 0.0, 0.0}, p);
  EXPECT_DOUBLE_EQ(s.Phi, 1.0);
  EXPECT_DOUBLE_EQ(s.Psi, p.psi_c0 + 2.0);
}

TEST(Model, CompressorPeakAtUnitFlow) {
  PlantParams p;
  EXPECT_DOUBLE_EQ(compressor_char(1.0, p), 2.0);
  // Slope vanishes at the peak.
  const double h = 1e-6;
  EXPECT_NEAR((compressor_char(1.0 + h, p) - compressor_char(1.0 - h, p)) / (2 * h), 0.0, 1e-9);
}

TEST(Model, ThrottleGamma) {
  EXPECT_DOUBLE_EQ(throttle_gamma(1.0, 2.0), 2.0);
  EXPECT_THROW(throttle_gamma(1.0, 0.0), DomainError);
  EXPECT_THROW(throttle_gamma(1.0, -1.0), DomainError);
}

TEST(Model, ShiftedMatchesPhysicalOracle) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-0.8, 0.8);
  for (double psi_c0 : {0.0, 0.25}) {
    PlantParams p;
    p.psi_c0 = psi_c0;
    for (int k = 0; k < 50; ++k) {
      const ShiftedState x{std::abs(U(rng)), U(rng), U(rng)};
      const double u = U(rng);
      const PlantState s = unshift(x, p);
      const Eigen::Vector3d ref = mg3_oracle(s.R, s.Phi, s.Psi, u + 1.0, p.sigma, p.beta, psi_c0);
      const ShiftedState d = shifted_derivative(x, u, p);
      EXPECT_NEAR(d.R, ref(0), 1e-12);
      EXPECT_NEAR(d.phi, ref(1), 1e-12);
      EXPECT_NEAR(d.psi, ref(2), 1e-12);
      const PlantState dm = mg3_derivative(s, u + 1.0, p);
      EXPECT_NEAR(dm.R, ref(0), 1e-12);
      EXPECT_NEAR(dm.Phi, ref(1), 1e-12);
      EXPECT_NEAR(dm.Psi, ref(2), 1e-12);
    }
  }
}

TEST(Model, CriticalEquilibriumIsStationary) {
  PlantParams p;
  const ShiftedState d = shifted_derivative({0.0, 0.0, 0.0}, 0.0, p);
  EXPECT_EQ(d.R, 0.0);
  EXPECT_EQ(d.phi, 0.0);
  EXPECT_EQ(d.psi, 0.0);
}

TEST(Model, StallAxisIsInvariant) {
  PlantParams p;
  EXPECT_EQ(shifted_derivative({0.0, 0.3, -0.7}, 0.4, p).R, 0.0);
}

TEST(Model, AffineSplitInputDirection) {
  PlantParams p;
  const AffineSplit fg = split_affine({0.1, 0.2, 0.3}, p);
  EXPECT_LT((fg.input_dir - Vec3(0.0, 0.0, -2.0)).norm(), 1e-15);
  const ShiftedState d = shifted_derivative({0.1, 0.2, 0.3}, 0.5, p);
  EXPECT_NEAR(d.psi, fg.drift(2) - 2.0 * 0.5, 1e-14);
}

TEST(Model, DriftJacobianMatchesFiniteDifferences) {
  PlantParams p;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-0.9, 0.9);
  for (int k = 0; k < 100; ++k) {
    const Vec3 x(std::abs(U(rng)), U(rng), U(rng));
    auto f = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      return split_affine(ShiftedState::from(v), p).drift;
    };
    const Eigen::MatrixXd J = surge_test::fd_jacobian(f, x);
    EXPECT_LT(surge_test::rel_err(drift_jacobian(ShiftedState::from(x), p), J), 1e-6);
  }
}

TEST(Model, NegativeStallRejected) {
  PlantParams p;
  EXPECT_THROW(shifted_derivative({-1e-6, 0.0, 0.0}, 0.0, p), DomainError);
  EXPECT_NO_THROW(shifted_derivative({-1e-13, 0.0, 0.0}, 0.0, p));
}

TEST(Model, ExtendedChain) {
  PlantParams p;
  const ExtendedState e{{0.1, 0.0, 0.0}, 0.3, -0.2};
  const ExtendedState d = extended_derivative(e, 1.5, p);
  EXPECT_EQ(d.z1, -0.2);
  EXPECT_EQ(d.z2, 1.5);
  EXPECT_NEAR(d.x.psi, -2.0 * (0.3 - 0.0), 1e-15);
}

TEST(Model, ParamsValidate) {
  PlantParams p;
  EXPECT_NO_THROW(p.validate());
  p.sigma = 0.0;
  EXPECT_THROW(p.validate(), DomainError);
}

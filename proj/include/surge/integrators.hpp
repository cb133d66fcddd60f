#pragma once

// Explicit RK4, Dormand-Prince 5(4) and a linearly implicit Rosenbrock 4(3)
// stepper for fixed-size Eigen vectors. Adaptive drivers report each accepted
// step to a callback that can stop the integration early.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace surge {

/// Thrown when an adaptive step size drops below the floor or the step count
/// limit is hit.
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdaptiveOptions {
  double abstol = 1e-9;
  double reltol = 1e-9;
  double h_init = 1e-6;
  double h_max = 0.1;
  double h_min = 1e-12;
  std::size_t max_steps = 200'000'000;
};

struct AdaptiveStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  double t_end = 0.0;
  bool stopped = false;  // callback asked to stop
};

template <class Vec, class Rhs>
Vec step_rk4(Rhs&& f, const Vec& y, double t, double h) {
  const Vec k1 = f(t, y);
  const Vec k2 = f(t + 0.5 * h, Vec(y + 0.5 * h * k1));
  const Vec k3 = f(t + 0.5 * h, Vec(y + 0.5 * h * k2));
  const Vec k4 = f(t + h, Vec(y + h * k3));
  return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace detail {

template <class Vec>
double error_norm(const Vec& err, const Vec& y0, const Vec& y1, const AdaptiveOptions& o) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = o.abstol + o.reltol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    m = std::max(m, std::abs(err(i)) / sc);
  }
  return m;
}

inline void check_step(double h, double t, const AdaptiveOptions& o) {
  if (h < o.h_min) {
    throw IntegrationError("step size underflow (h = " + std::to_string(h) +
                           ") at t = " + std::to_string(t));
  }
}

}  // namespace detail

/// Dormand-Prince 5(4) with FSAL. on_step(t, y) is called after each accepted
/// step and returns false to stop.
template <class Vec, class Rhs, class OnStep>
AdaptiveStats integrate_dopri5(Rhs&& f, Vec& y, double t0, double t1, const AdaptiveOptions& o,
                               OnStep&& on_step) {
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  AdaptiveStats st;
  double t = t0;
  double h = std::min(o.h_init, o.h_max);
  Vec k1 = f(t, y);
  while (t < t1) {
    if (st.accepted + st.rejected >= o.max_steps) throw IntegrationError("step limit reached");
    h = std::min(h, t1 - t);
    const Vec k2 = f(t + c2 * h, Vec(y + h * a21 * k1));
    const Vec k3 = f(t + c3 * h, Vec(y + h * (a31 * k1 + a32 * k2)));
    const Vec k4 = f(t + c4 * h, Vec(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    const Vec k5 = f(t + c5 * h, Vec(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    const Vec k6 =
        f(t + h, Vec(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
    const Vec y1 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec k7 = f(t + h, y1);
    const Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = y1.allFinite() ? detail::error_norm(err, y, y1, o)
                                     : std::numeric_limits<double>::infinity();
    if (!std::isfinite(en)) {
      h *= 0.25;
      ++st.rejected;
      detail::check_step(h, t, o);
      continue;
    }
    if (en <= 1.0) {
      t = (t1 - t - h < 1e-15 * std::max(1.0, std::abs(t1))) ? t1 : t + h;
      y = y1;
      k1 = k7;
      ++st.accepted;
      const double fac = en == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(en, -0.2));
      h = std::min(o.h_max, h * fac);
      if (!on_step(t, y)) {
        st.stopped = true;
        break;
      }
      // The callback may have modified y (clamping).
      if (y != y1) k1 = f(t, y);
    } else {
      ++st.rejected;
      h *= std::max(0.2, 0.9 * std::pow(en, -0.25));
      detail::check_step(h, t, o);
    }
  }
  st.t_end = t;
  return st;
}

/// Four-stage L-stable Rosenbrock method of order 4 with an embedded order-3
/// estimate (Shampine's coefficients). jac(t, y) returns df/dy; there is no
/// df/dt term, so f is expected to be autonomous.
template <class Vec, class Rhs, class Jac, class OnStep>
AdaptiveStats integrate_rosenbrock(Rhs&& f, Jac&& jac, Vec& y, double t0, double t1,
                                   const AdaptiveOptions& o, OnStep&& on_step) {
  constexpr int N = Vec::RowsAtCompileTime;
  using Mat = Eigen::Matrix<double, N, N>;
  constexpr double GAM = 1.0 / 2.0, A21 = 2.0, A31 = 48.0 / 25.0, A32 = 6.0 / 25.0;
  constexpr double C21 = -8.0, C31 = 372.0 / 25.0, C32 = 12.0 / 5.0;
  constexpr double C41 = -112.0 / 125.0, C42 = -54.0 / 125.0, C43 = -2.0 / 5.0;
  constexpr double B1 = 19.0 / 9.0, B2 = 1.0 / 2.0, B3 = 25.0 / 108.0, B4 = 125.0 / 108.0;
  constexpr double E1 = 17.0 / 54.0, E2 = 7.0 / 36.0, E3 = 0.0, E4 = 125.0 / 108.0;
  constexpr double A2X = 1.0, A3X = 3.0 / 5.0;

  AdaptiveStats st;
  double t = t0;
  double h = std::min(o.h_init, o.h_max);
  while (t < t1) {
    if (st.accepted + st.rejected >= o.max_steps) throw IntegrationError("step limit reached");
    const Vec f0 = f(t, y);
    const Mat J = jac(t, y);
    for (;;) {
      h = std::min(h, t1 - t);
      const Mat W = Mat::Identity() / (GAM * h) - J;
      const Eigen::PartialPivLU<Mat> lu(W);
      const Vec g1 = lu.solve(f0);
      const Vec f2 = f(t + A2X * h, Vec(y + A21 * g1));
      const Vec g2 = lu.solve(Vec(f2 + C21 * g1 / h));
      const Vec f3 = f(t + A3X * h, Vec(y + A31 * g1 + A32 * g2));
      const Vec g3 = lu.solve(Vec(f3 + (C31 * g1 + C32 * g2) / h));
      const Vec g4 = lu.solve(Vec(f3 + (C41 * g1 + C42 * g2 + C43 * g3) / h));
      const Vec y1 = y + B1 * g1 + B2 * g2 + B3 * g3 + B4 * g4;
      const Vec err = E1 * g1 + E2 * g2 + E3 * g3 + E4 * g4;
      const double en = y1.allFinite() ? detail::error_norm(err, y, y1, o)
                                       : std::numeric_limits<double>::infinity();
      if (std::isfinite(en) && en <= 1.0) {
        t = (t1 - t - h < 1e-15 * std::max(1.0, std::abs(t1))) ? t1 : t + h;
        y = y1;
        ++st.accepted;
        const double fac = en == 0.0 ? 1.5 : std::min(1.5, 0.9 * std::pow(en, -0.25));
        h = std::min(o.h_max, h * fac);
        break;
      }
      ++st.rejected;
      h *= std::isfinite(en) ? std::max(0.5, 0.9 * std::pow(en, -1.0 / 3.0)) : 0.25;
      detail::check_step(h, t, o);
    }
    if (!on_step(t, y)) {
      st.stopped = true;
      break;
    }
  }
  st.t_end = t;
  return st;
}

/// Convenience wrapper returning every accepted (t, y) with DOPRI5.
template <class Vec, class Rhs>
std::vector<std::pair<double, Vec>> integrate_adaptive(Rhs&& f, Vec y0, double t0, double t1,
                                                       const AdaptiveOptions& o = {}) {
  std::vector<std::pair<double, Vec>> out;
  out.emplace_back(t0, y0);
  integrate_dopri5(f, y0, t0, t1, o, [&](double t, const Vec& y) {
    out.emplace_back(t, y);
    return true;
  });
  return out;
}

/// Forward-difference Jacobian, used when no analytic one is available.
template <class Vec, class Rhs>
Eigen::Matrix<double, Vec::RowsAtCompileTime, Vec::RowsAtCompileTime> fd_jacobian(Rhs&& f,
                                                                                 double t,
                                                                                 const Vec& y) {
  constexpr int N = Vec::RowsAtCompileTime;
  Eigen::Matrix<double, N, N> J;
  const Vec f0 = f(t, y);
  for (int j = 0; j < N; ++j) {
    Vec yp = y;
    const double d = 1e-7 * std::max(1.0, std::abs(y(j)));
    yp(j) += d;
    J.col(j) = (f(t, yp) - f0) / d;
  }
  return J;
}

}  // namespace surge

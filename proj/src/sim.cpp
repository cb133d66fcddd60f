#include "surge/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "surge/integrators.hpp"

namespace surge {

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;

ShiftedState head(const auto& y) { return {y(0), y(1), y(2)}; }

Vec3 plant_flow(const ShiftedState& x, double u, const PlantParams& p) {
  // Unchecked: intermediate stages may dip a hair below R = 0.
  const AffineSplit fg = split_affine(x, p);
  return fg.drift + fg.input_dir * u;
}

std::optional<double> gamma_of(const ShiftedState& x, double u, const PlantParams& p) {
  const PlantState s = unshift(x, p);
  if (!(s.Psi > 0.0)) return std::nullopt;
  return throttle_gamma(u + 1.0, s.Psi);
}

std::string fmt_t(double t) {
  std::ostringstream os;
  os << t;
  return os.str();
}

template <class V>
void check_finite(const V& y, double t) {
  if (!y.allFinite()) throw SimulationError("state became non-finite at t = " + fmt_t(t));
}

/// Clamp window for the true stall amplitude; returns true when clamped.
bool clamp_R(double& R, double t) {
  if (R >= 0.0) return false;
  if (R >= -kClampWindow) {
    R = 0.0;
    return true;
  }
  throw SimulationError("stall amplitude went negative (R = " + fmt_t(R) + ") at t = " + fmt_t(t));
}

double spectral_radius(const Eigen::MatrixXd& J) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(J, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

class Recorder {
 public:
  Recorder(const SimConfig& cfg, Trajectory& tr) : cfg_(cfg), tr_(tr) {}

  bool due(double t) const {
    return tr_.samples.empty() || cfg_.output_dt <= 0.0 ||
           t >= last_ + cfg_.output_dt * (1.0 - 1e-9);
  }
  void push(Sample s) {
    last_ = s.t;
    tr_.samples.push_back(std::move(s));
  }
  bool last_is(double t) const { return !tr_.samples.empty() && tr_.samples.back().t == t; }

 private:
  const SimConfig& cfg_;
  Trajectory& tr_;
  double last_ = 0.0;
};

void add_warning_for_stiffness(const SimConfig& cfg, Trajectory& tr) {
  const double rho = tr.diag.stiffness_estimate;
  const IntegratorKind k = cfg.integrator_or_default();
  if (k == IntegratorKind::rk4 && rho * cfg.h > 2.7) {
    tr.diag.warnings.push_back("rk4 step " + fmt_t(cfg.h) + " exceeds the stability limit for " +
                               "spectral radius " + fmt_t(rho));
  }
  if (k == IntegratorKind::rk45 && rho > 1e4) {
    tr.diag.warnings.push_back("explicit adaptive integration of a stiff system (spectral radius " +
                               fmt_t(rho) + "); rosenbrock is recommended");
  }
}

AdaptiveOptions adaptive_options(const SimConfig& cfg) {
  AdaptiveOptions o;
  o.abstol = cfg.abstol;
  o.reltol = cfg.reltol;
  o.h_init = cfg.h;
  o.h_max = cfg.h_max;
  return o;
}

// Drives one of the adaptive integrators or fixed RK4 over a state of size N.
template <class Vec, class Rhs, class Jac, class OnStep>
void drive(const SimConfig& cfg, Trajectory& tr, Vec& y, Rhs&& f, Jac&& jac, OnStep&& on_step) {
  const IntegratorKind k = cfg.integrator_or_default();
  if (k == IntegratorKind::rk4) {
    double t = 0.0;
    const auto n = static_cast<std::size_t>(std::ceil(cfg.t_final / cfg.h - 1e-9));
    for (std::size_t i = 0; i < n; ++i) {
      const double h = std::min(cfg.h, cfg.t_final - t);
      y = step_rk4(f, y, t, h);
      t = (i + 1 == n) ? cfg.t_final : t + h;
      ++tr.diag.steps;
      if (!on_step(t, y)) return;
    }
    return;
  }
  const AdaptiveOptions o = adaptive_options(cfg);
  AdaptiveStats st;
  try {
    if (k == IntegratorKind::rk45) {
      st = integrate_dopri5(f, y, 0.0, cfg.t_final, o, on_step);
    } else {
      st = integrate_rosenbrock(f, jac, y, 0.0, cfg.t_final, o, on_step);
    }
  } catch (const IntegrationError& e) {
    throw SimulationError(e.what());
  }
  tr.diag.steps = st.accepted;
  tr.diag.rejected_steps = st.rejected;
}

Trajectory simulate_plant(const SimConfig& cfg, const ControllerGains& g, const PlantParams& p) {
  Trajectory tr;
  tr.mode = cfg.mode;
  Recorder rec(cfg, tr);

  auto f = [&](double, const Vec3& y) { return closed_loop_rhs(cfg.mode, head(y), g, p, cfg.u_open); };
  auto jac = [&](double, const Vec3& y) { return closed_loop_jacobian(cfg.mode, head(y), g, p); };

  auto sample = [&](double t, const Vec3& y) {
    Sample s;
    s.t = t;
    s.x = head(y);
    s.u = state_feedback_input(cfg.mode, s.x, g, p, cfg.u_open);
    s.gamma = gamma_of(s.x, s.u, p);
    s.V = lyapunov_V(s.x, g);
    return s;
  };

  Vec3 y = cfg.x0.vec();
  tr.diag.stiffness_estimate = spectral_radius(jac(0.0, y));
  add_warning_for_stiffness(cfg, tr);
  rec.push(sample(0.0, y));

  auto on_step = [&](double t, Vec3& yy) {
    check_finite(yy, t);
    if (clamp_R(yy(0), t)) ++tr.diag.r_clamps;
    const bool stop = cfg.stop_norm > 0.0 && yy.norm() < cfg.stop_norm;
    if (stop || rec.due(t) || t >= cfg.t_final) rec.push(sample(t, yy));
    if (stop) tr.diag.stopped_at_norm = true;
    return !stop;
  };
  drive(cfg, tr, y, f, jac, on_step);
  return tr;
}

Trajectory simulate_extended(const SimConfig& cfg, const ControllerGains& g, const PlantParams& p) {
  Trajectory tr;
  tr.mode = cfg.mode;
  Recorder rec(cfg, tr);

  auto f = [&](double, const Vec5& y) {
    const ExtendedState e{head(y), y(3), y(4)};
    const BacksteppingTerms bt = backstepping_terms(e, g, p);
    Vec5 d;
    d.head<3>() = plant_flow(e.x, e.z1, p);
    d(3) = e.z2;
    d(4) = bt.v;
    return d;
  };
  auto jac = [&](double t, const Vec5& y) { return fd_jacobian(f, t, y); };

  auto sample = [&](double t, const Vec5& y) {
    const ExtendedState e{head(y), y(3), y(4)};
    const BacksteppingTerms bt = backstepping_terms(e, g, p);
    Sample s;
    s.t = t;
    s.x = e.x;
    s.z1 = e.z1;
    s.z2 = e.z2;
    s.u = e.z1;
    s.v = bt.v;
    s.gamma = gamma_of(s.x, s.u, p);
    s.V = lyapunov_V(s.x, g);
    s.Vbar = s.V + 0.5 * bt.z1_tilde * bt.z1_tilde + 0.5 * bt.z2_tilde * bt.z2_tilde;
    return s;
  };

  Vec5 y;
  y << cfg.x0.R, cfg.x0.phi, cfg.x0.psi, cfg.z1_0, cfg.z2_0;
  tr.diag.stiffness_estimate = spectral_radius(jac(0.0, y));
  add_warning_for_stiffness(cfg, tr);
  rec.push(sample(0.0, y));

  auto on_step = [&](double t, Vec5& yy) {
    check_finite(yy, t);
    if (clamp_R(yy(0), t)) ++tr.diag.r_clamps;
    const bool stop = cfg.stop_norm > 0.0 && yy.head<3>().norm() < cfg.stop_norm;
    if (stop || rec.due(t) || t >= cfg.t_final) rec.push(sample(t, yy));
    if (stop) tr.diag.stopped_at_norm = true;
    return !stop;
  };
  drive(cfg, tr, y, f, jac, on_step);
  return tr;
}

Trajectory simulate_output_feedback(const SimConfig& cfg, const ControllerGains& g,
                                    const PlantParams& p, const ObserverConfig& obs) {
  if (cfg.integrator_or_default() != IntegratorKind::rk4) {
    throw std::invalid_argument("output feedback runs with the fixed-step rk4 integrator");
  }
  Trajectory tr;
  tr.mode = cfg.mode;
  Recorder rec(cfg, tr);

  auto split = [](const Vec8& y, ShiftedState& x, Vec2& z, ShiftedState& xh) {
    x = {y(0), y(1), y(2)};
    z = Vec2(y(3), y(4));
    xh = {y(5), y(6), y(7)};
  };

  FaceSet held;
  FaceSet carry;  // faces held into the next step after a stalled event search
  auto f = [&](double t, const Vec8& y) {
    ShiftedState x, xh;
    Vec2 z;
    split(y, x, z, xh);
    const double v = backstepping_terms({xh, z(0), z(1)}, g, p).v;
    const Vec2 zdot(z(1), v);
    double psi_meas = x.psi;
    if (cfg.measurement_noise) psi_meas += cfg.measurement_noise(t);
    const ShiftedState raw = observer_derivative(xh, psi_meas, z(0), obs, p);
    const ProjectionResult pr = project_derivative(xh, raw, z, zdot, obs, p, held);
    Vec8 d;
    d.head<3>() = plant_flow(x, z(0), p);
    d.segment<2>(3) = zdot;
    d.tail<3>() = pr.xhat_dot.vec();
    return d;
  };

  auto sample = [&](double t, const Vec8& y) {
    ShiftedState x, xh;
    Vec2 z;
    split(y, x, z, xh);
    const BacksteppingTerms bt = backstepping_terms({x, z(0), z(1)}, g, p);
    Sample s;
    s.t = t;
    s.x = x;
    s.z1 = z(0);
    s.z2 = z(1);
    s.xhat = xh;
    s.u = z(0);
    s.v = backstepping_terms({xh, z(0), z(1)}, g, p).v;
    s.gamma = gamma_of(x, s.u, p);
    s.V = lyapunov_V(x, g);
    s.Vbar = s.V + 0.5 * bt.z1_tilde * bt.z1_tilde + 0.5 * bt.z2_tilde * bt.z2_tilde;
    s.xi_hat = observability_map(xh, z, p);
    return s;
  };

  auto exceedances = [&](const Vec8& y) {
    ShiftedState x, xh;
    Vec2 z;
    split(y, x, z, xh);
    const ObservableCoords xi = observability_map(xh, z, p);
    const XiBox box = cube_box(z, obs.cube, p);
    std::array<double, 6> e{};
    for (Face fc : kAllFaces) e[static_cast<int>(fc)] = face_exceedance(fc, xi, box);
    return e;
  };
  auto max_of = [](const std::array<double, 6>& e, std::optional<FaceSet> only = std::nullopt) {
    double m = -std::numeric_limits<double>::infinity();
    for (Face fc : kAllFaces) {
      if (!only || only->contains(fc)) m = std::max(m, e[static_cast<int>(fc)]);
    }
    return m;
  };

  // Moves xi onto the cube: faces beyond the box and faces in `land` are set
  // exactly to their bound.
  auto snap = [&](Vec8& y, FaceSet land) {
    ShiftedState x, xh;
    Vec2 z;
    split(y, x, z, xh);
    Vec3 xi = observability_map(xh, z, p).vec();
    const XiBox box = cube_box(z, obs.cube, p);
    double moved = 0.0;
    bool changed = false;
    for (int a = 0; a < 3; ++a) {
      const Face up = static_cast<Face>(2 * a);
      const Face lo = static_cast<Face>(2 * a + 1);
      double target = xi(a);
      if (xi(a) > box.upper(a) || land.contains(up)) target = box.upper(a);
      if (xi(a) < box.lower(a) || land.contains(lo)) target = box.lower(a);
      if (target != xi(a)) {
        moved = std::max(moved, std::abs(target - xi(a)));
        xi(a) = target;
        changed = true;
      }
    }
    if (!changed) return;
    tr.diag.max_snap = std::max(tr.diag.max_snap, moved);
    y.tail<3>() = inverse_map(ObservableCoords::from(xi), z, p, obs.eps_sing).vec();
  };

  Vec8 y;
  y << cfg.x0.R, cfg.x0.phi, cfg.x0.psi, cfg.z1_0, cfg.z2_0, cfg.xhat0.R, cfg.xhat0.phi,
      cfg.xhat0.psi;
  {
    const double e0 = max_of(exceedances(y));
    if (e0 > obs.snap_tol) {
      throw SimulationError("initial estimate lies outside the observer cube (by " + fmt_t(e0) +
                            ")");
    }
  }
  tr.diag.stiffness_estimate = spectral_radius(fd_jacobian(f, 0.0, y));
  add_warning_for_stiffness(cfg, tr);
  rec.push(sample(0.0, y));

  // Steps ending further out than this are shortened to land on the face.
  const double event_tol = 0.5 * obs.snap_tol;
  double t = 0.0;
  const double eps_t = 1e-12 * std::max(1.0, cfg.t_final);
  try {
    while (t < cfg.t_final - eps_t) {
      const double h = std::min(cfg.h, cfg.t_final - t);
      {
        ShiftedState x, xh;
        Vec2 z;
        split(y, x, z, xh);
        held = cube_contains(observability_map(xh, z, p), z, obs.cube, p, obs.eps_face).active |
               carry;
      }
      FaceSet next_carry;
      Vec8 y1 = step_rk4(f, y, t, h);
      double h_used = h;
      FaceSet land;
      const auto e1 = exceedances(y1);
      const double v1 = max_of(e1);
      if (v1 > event_tol) {
        FaceSet crossing;
        for (Face fc : kAllFaces) {
          if (e1[static_cast<int>(fc)] > event_tol) crossing.insert(fc);
        }
        double lo = 0.0, hi = 1.0;
        Vec8 ylo = y;
        std::array<double, 6> elo{};
        bool landed = false;
        for (int it = 0; it < 200 && (hi - lo) * h > 1e-15; ++it) {
          const double mid = 0.5 * (lo + hi);
          const Vec8 ym = step_rk4(f, y, t, mid * h);
          const auto em = exceedances(ym);
          if (max_of(em) > event_tol) {
            hi = mid;
            continue;
          }
          lo = mid;
          ylo = ym;
          elo = em;
          if (max_of(em, crossing) >= -obs.snap_tol) {
            landed = true;
            break;
          }
        }
        if (landed && lo > 0.0) {
          y1 = ylo;
          h_used = lo * h;
          for (Face fc : kAllFaces) {
            if (crossing.contains(fc) && elo[static_cast<int>(fc)] >= -obs.snap_tol) land.insert(fc);
          }
          ++tr.diag.face_events;
        } else if (lo > 0.0) {
          // The end state jumps across the face as the step shrinks (the
          // projection switches inside the stages). Stop at the last inside
          // point and hold the crossing faces through the next step.
          y1 = ylo;
          h_used = lo * h;
          ++tr.diag.face_events;
          next_carry = crossing;
        } else if (!((carry | crossing) == carry)) {
          carry = carry | crossing;
          continue;
        } else {
          ++tr.diag.forced_snaps;
        }
      }
      tr.diag.max_cube_violation = std::max(tr.diag.max_cube_violation, max_of(exceedances(y1)));
      snap(y1, land);
      carry = next_carry;
      t = (std::abs(cfg.t_final - (t + h_used)) <= eps_t) ? cfg.t_final : t + h_used;
      y = y1;
      ++tr.diag.steps;
      check_finite(y, t);
      if (clamp_R(y(0), t)) ++tr.diag.r_clamps;
      const bool stop = cfg.stop_norm > 0.0 && y.head<3>().norm() < cfg.stop_norm;
      if (stop || rec.due(t) || t >= cfg.t_final) rec.push(sample(t, y));
      if (stop) {
        tr.diag.stopped_at_norm = true;
        break;
      }
    }
  } catch (const SingularityError& e) {
    throw SimulationError(std::string("observer singularity at t = ") + fmt_t(t) + ": " + e.what());
  }
  if (!rec.last_is(t)) rec.push(sample(t, y));
  return tr;
}

}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::open_loop: return "open-loop";
    case Mode::partial_sf: return "partial-sf";
    case Mode::full_sf: return "full-sf";
    case Mode::extended_sf: return "extended-sf";
    case Mode::output_feedback: return "output-feedback";
  }
  return "?";
}

const char* to_string(IntegratorKind k) {
  switch (k) {
    case IntegratorKind::rk4: return "rk4";
    case IntegratorKind::rk45: return "rk45";
    case IntegratorKind::rosenbrock: return "rosenbrock";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::open_loop, Mode::partial_sf, Mode::full_sf, Mode::extended_sf,
                 Mode::output_feedback}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown mode '" + s + "'");
}

IntegratorKind parse_integrator(const std::string& s) {
  for (IntegratorKind k : {IntegratorKind::rk4, IntegratorKind::rk45, IntegratorKind::rosenbrock}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown integrator '" + s + "'");
}

IntegratorKind default_integrator(Mode m) {
  return m == Mode::output_feedback ? IntegratorKind::rk4 : IntegratorKind::rosenbrock;
}

void SimConfig::validate() const {
  if (!(t_final >= 0.0) || !std::isfinite(t_final)) {
    throw std::invalid_argument("t_final must be finite and nonnegative");
  }
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
  if (!(abstol > 0.0) || !(reltol > 0.0)) throw std::invalid_argument("tolerances must be positive");
  if (!(h_max > 0.0)) throw std::invalid_argument("h_max must be positive");
  if (output_dt < 0.0) throw std::invalid_argument("output_dt must be nonnegative");
  if (stop_norm < 0.0) throw std::invalid_argument("stop_norm must be nonnegative");
  if (x0.R < 0.0) throw DomainError("initial stall amplitude must be nonnegative");
  if (!x0.vec().allFinite() || !std::isfinite(z1_0) || !std::isfinite(z2_0) ||
      !xhat0.vec().allFinite()) {
    throw std::invalid_argument("initial state must be finite");
  }
  if (mode == Mode::output_feedback && integrator_or_default() != IntegratorKind::rk4) {
    throw std::invalid_argument("output feedback runs with the fixed-step rk4 integrator");
  }
}

double state_feedback_input(Mode m, const ShiftedState& x, const ControllerGains& g,
                            const PlantParams& p, double u_open) {
  switch (m) {
    case Mode::open_loop: return u_open;
    case Mode::partial_sf: return partial_state_feedback(x, g.d1, g.d2);
    case Mode::full_sf: return full_state_feedback(x, g, p);
    default: break;
  }
  throw std::invalid_argument(std::string("no static input law for mode ") + to_string(m));
}

Vec3 closed_loop_rhs(Mode m, const ShiftedState& x, const ControllerGains& g, const PlantParams& p,
                     double u_open) {
  return plant_flow(x, state_feedback_input(m, x, g, p, u_open), p);
}

Mat3 closed_loop_jacobian(Mode m, const ShiftedState& x, const ControllerGains& g,
                          const PlantParams& p) {
  Mat3 J = drift_jacobian(x, p);
  const Vec3 gd = split_affine(x, p).input_dir;
  switch (m) {
    case Mode::open_loop: break;
    case Mode::partial_sf: J += gd * Vec3(0.0, -g.d2, g.d1).transpose(); break;
    case Mode::full_sf: J += gd * grad_ubar(x, g, p).transpose(); break;
    default: throw std::invalid_argument(std::string("no static input law for mode ") + to_string(m));
  }
  return J;
}

Trajectory simulate(const SimConfig& cfg, const ControllerGains& gains, const PlantParams& p,
                    const ObserverConfig* obs) {
  p.validate();
  cfg.validate();
  switch (cfg.mode) {
    case Mode::open_loop:
    case Mode::partial_sf:
    case Mode::full_sf: return simulate_plant(cfg, gains, p);
    case Mode::extended_sf: return simulate_extended(cfg, gains, p);
    case Mode::output_feedback:
      if (!obs) throw std::invalid_argument("output feedback needs an observer configuration");
      return simulate_output_feedback(cfg, gains, p, *obs);
  }
  throw std::invalid_argument("unknown mode");
}

}  // namespace surge

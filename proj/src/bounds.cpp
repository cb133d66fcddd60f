#include "surge/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace surge {

BoundEstimate estimate_cube_bounds(const std::vector<ShiftedState>& starts, const ControllerGains& g,
                                   const PlantParams& p, const BoundEstimateOptions& opt) {
  if (starts.empty()) throw std::invalid_argument("estimate_cube_bounds needs at least one start");
  if (opt.mode != Mode::full_sf && opt.mode != Mode::extended_sf) {
    throw std::invalid_argument("bounds come from a state-feedback mode");
  }
  BoundEstimate out;
  const double inf = std::numeric_limits<double>::infinity();
  out.observed_min = Vec3::Constant(inf);
  out.observed_max = Vec3::Constant(-inf);

  for (const ShiftedState& x0 : starts) {
    SimConfig cfg;
    cfg.mode = opt.mode;
    cfg.t_final = opt.t_final;
    cfg.x0 = x0;
    cfg.h = opt.h;
    cfg.output_dt = opt.output_dt;
    if (opt.mode == Mode::extended_sf) cfg.integrator = IntegratorKind::rk4;
    ++out.runs;
    std::ostringstream who;
    who << "start (" << x0.R << ", " << x0.phi << ", " << x0.psi << ")";
    try {
      const Trajectory tr = simulate(cfg, g, p);
      const Sample& first = tr.samples.front();
      const Sample& last = tr.back();
      const double l0 = first.Vbar ? *first.Vbar : first.V;
      const double l1 = last.Vbar ? *last.Vbar : last.V;
      if (!(l1 <= l0 + 1e-12)) {
        out.failures.push_back(who.str() + ": Lyapunov function grew from " + std::to_string(l0) +
                               " to " + std::to_string(l1));
        continue;
      }
      for (const Sample& s : tr.samples) {
        const Vec3 q(s.x.psi, s.x.phi, flow_acceleration_term(s.x));
        out.observed_min = out.observed_min.cwiseMin(q);
        out.observed_max = out.observed_max.cwiseMax(q);
      }
    } catch (const std::exception& e) {
      out.failures.push_back(who.str() + ": " + e.what());
    }
  }

  if (!out.ok()) return out;
  const Vec3 width = out.observed_max - out.observed_min;
  Vec3 pad;
  for (int i = 0; i < 3; ++i) pad(i) = std::max(opt.margin * width(i), opt.margin_floor);
  const Vec3 lo = out.observed_min - pad;
  const Vec3 hi = out.observed_max + pad;
  out.bounds.convention = CubeConvention::direct;
  out.bounds.a1 = lo(0);
  out.bounds.b1 = hi(0);
  out.bounds.a2 = lo(1);
  out.bounds.b2 = hi(1);
  out.bounds.a3 = lo(2);
  out.bounds.b3 = hi(2);
  return out;
}

}  // namespace surge

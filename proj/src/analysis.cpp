#include "surge/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace surge {

namespace {

Vec3 plant_velocity(const Sample& s, const PlantParams& p) {
  const AffineSplit fg = split_affine(s.x, p);
  return fg.drift + fg.input_dir * s.u;
}

template <class Get>
double central_difference(const std::vector<Sample>& ss, std::size_t i, Get get) {
  const std::size_t n = ss.size();
  if (n < 2) return 0.0;
  const std::size_t a = (i == 0) ? 0 : i - 1;
  const std::size_t b = (i + 1 == n) ? i : i + 1;
  return (get(ss[b]) - get(ss[a])) / (ss[b].t - ss[a].t);
}

}  // namespace

std::vector<VdotSample> vdot_along(const Trajectory& tr, const ControllerGains& g,
                                   const PlantParams& p) {
  std::vector<VdotSample> out;
  out.reserve(tr.samples.size());
  const bool ext = tr.has_extended();
  for (std::size_t i = 0; i < tr.samples.size(); ++i) {
    const Sample& s = tr.samples[i];
    VdotSample d;
    d.t = s.t;
    const Vec3 xd = plant_velocity(s, p);
    d.vdot = grad_V(s.x, g).dot(xd);
    d.vdot_fd = central_difference(tr.samples, i, [](const Sample& q) { return q.V; });
    if (ext && s.v && s.Vbar) {
      const BacksteppingTerms bt = backstepping_terms({s.x, s.z1, s.z2}, g, p);
      const double z1t_dot = s.z2 - grad_ubar(s.x, g, p).dot(xd);
      const double z2t_dot = *s.v - bt.alpha_dot;
      d.vbardot = d.vdot + bt.z1_tilde * z1t_dot + bt.z2_tilde * z2t_dot;
      d.vbardot_fd = central_difference(tr.samples, i, [](const Sample& q) { return *q.Vbar; });
    }
    out.push_back(d);
  }
  return out;
}

bool Box3::contains(const Vec3& v, double tol) const {
  return (v.array() >= lower.array() - tol).all() && (v.array() <= upper.array() + tol).all();
}

Box3 omega0_box() { return {Vec3(0.0, -0.1, -0.5), Vec3(0.1, 0.1, 0.5)}; }

RegionSpec RegionSpec::stall_halfspace() { return {}; }

RegionSpec RegionSpec::omega0() {
  RegionSpec r;
  r.kind = Kind::omega0;
  r.box = omega0_box();
  return r;
}

RegionSpec RegionSpec::sublevel(double c, const Box3& box) {
  RegionSpec r;
  r.kind = Kind::sublevel;
  r.box = box;
  r.level = c;
  return r;
}

bool RegionSpec::contains(const ShiftedState& x, const ControllerGains& g) const {
  if (x.R < 0.0) return false;
  switch (kind) {
    case Kind::stall_halfspace: return true;
    case Kind::omega0: return omega0_box().contains(x.vec());
    case Kind::sublevel: return lyapunov_V(x, g) <= level;
  }
  return false;
}

EquilibriumReport find_equilibria(Mode m, const ControllerGains& g, const RegionSpec& region,
                                  const PlantParams& p, const EquilibriumOptions& opt) {
  if (m != Mode::open_loop && m != Mode::partial_sf && m != Mode::full_sf) {
    throw std::invalid_argument("equilibria are searched for the three-state closed loops only");
  }
  if (opt.grid < 1) throw std::invalid_argument("grid must be at least 1");
  EquilibriumReport rep;
  auto F = [&](const Vec3& v) { return closed_loop_rhs(m, ShiftedState::from(v), g, p, opt.u_open); };
  auto J = [&](const Vec3& v) { return closed_loop_jacobian(m, ShiftedState::from(v), g, p); };

  const Vec3 lo = region.box.lower;
  const Vec3 span = region.box.upper - region.box.lower;
  for (int i = 0; i < opt.grid; ++i) {
    for (int j = 0; j < opt.grid; ++j) {
      for (int k = 0; k < opt.grid; ++k) {
        const Vec3 frac = (opt.grid == 1)
                              ? Vec3(Vec3::Constant(0.5))
                              : Vec3(Vec3(i, j, k) / static_cast<double>(opt.grid - 1));
        Vec3 x = lo + span.cwiseProduct(frac);
        ++rep.starts;
        Vec3 r = F(x);
        bool ok = false;
        for (int it = 0; it < opt.max_iter; ++it) {
          const Vec3 step = J(x).colPivHouseholderQr().solve(-r);
          if (!step.allFinite()) break;
          double lam = 1.0;
          Vec3 xn = x + step;
          Vec3 rn = F(xn);
          while (rn.norm() > r.norm() && lam > 1.0 / 1024.0) {
            lam *= 0.5;
            xn = x + lam * step;
            rn = F(xn);
          }
          const double moved = (xn - x).norm();
          x = xn;
          r = rn;
          if (r.norm() < opt.residual_tol && moved < 1e-14 * (1.0 + x.norm())) {
            ok = true;
            break;
          }
        }
        if (!ok && r.norm() < opt.residual_tol) ok = true;
        if (!ok) {
          ++rep.nonconvergent;
          continue;
        }
        if (x(0) < -kStallAmplitudeTolerance) continue;
        if (x(0) < 0.0) x(0) = 0.0;
        const ShiftedState xs = ShiftedState::from(x);
        if (!region.box.contains(x, 1e-9) || !region.contains(xs, g)) continue;
        bool dup = false;
        for (Equilibrium& e : rep.equilibria) {
          if ((e.x.vec() - x).norm() < opt.dedup_tol) {
            dup = true;
            if (r.norm() < e.residual) e = {xs, r.norm()};
            break;
          }
        }
        if (!dup) rep.equilibria.push_back({xs, r.norm()});
      }
    }
  }
  std::sort(rep.equilibria.begin(), rep.equilibria.end(),
            [](const Equilibrium& a, const Equilibrium& b) { return a.x.R < b.x.R; });
  return rep;
}

std::optional<double> settling_time(const std::vector<double>& t, const std::vector<double>& signal,
                                    double threshold) {
  if (t.size() != signal.size()) throw std::invalid_argument("settling_time: size mismatch");
  if (t.empty()) return std::nullopt;
  for (std::size_t k = signal.size(); k-- > 0;) {
    if (!(signal[k] < threshold)) {
      if (k + 1 == signal.size()) return std::nullopt;
      return t[k + 1];
    }
  }
  return t.front();
}

std::optional<double> settling_time(const Trajectory& tr, double threshold) {
  std::vector<double> t, s;
  for (const Sample& q : tr.samples) {
    t.push_back(q.t);
    s.push_back(q.x.norm());
  }
  return settling_time(t, s, threshold);
}

std::optional<double> estimation_settling_time(const Trajectory& tr, double threshold) {
  std::vector<double> t, s;
  for (const Sample& q : tr.samples) {
    if (!q.xhat) throw std::invalid_argument("trajectory carries no state estimate");
    t.push_back(q.t);
    s.push_back((q.xhat->vec() - q.x.vec()).norm());
  }
  return settling_time(t, s, threshold);
}

double sup_distance(const Trajectory& a, const Trajectory& b) {
  if (a.samples.empty() || b.samples.empty()) throw std::invalid_argument("empty trajectory");
  const auto& bs = b.samples;
  const double t_lo = std::max(a.samples.front().t, bs.front().t);
  const double t_hi = std::min(a.samples.back().t, bs.back().t);
  double sup = 0.0;
  std::size_t j = 0;
  for (const Sample& s : a.samples) {
    if (s.t < t_lo || s.t > t_hi) continue;
    while (j + 1 < bs.size() && bs[j + 1].t < s.t) ++j;
    Vec3 xb;
    if (j + 1 < bs.size() && bs[j + 1].t > bs[j].t && s.t >= bs[j].t) {
      const double w = (s.t - bs[j].t) / (bs[j + 1].t - bs[j].t);
      xb = (1.0 - w) * bs[j].x.vec() + w * bs[j + 1].x.vec();
    } else {
      xb = bs[j].x.vec();
    }
    sup = std::max(sup, (s.x.vec() - xb).norm());
  }
  return sup;
}

namespace {

double radical_inverse(std::size_t i, unsigned base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace

std::vector<ShiftedState> halton_points(const Box3& box, std::size_t n, bool origin_first) {
  std::vector<ShiftedState> out;
  if (origin_first) {
    out.push_back(ShiftedState::from(Vec3::Zero().cwiseMax(box.lower).cwiseMin(box.upper)));
  }
  const Vec3 span = box.upper - box.lower;
  for (std::size_t i = 1; i <= n; ++i) {
    const Vec3 u(radical_inverse(i, 2), radical_inverse(i, 3), radical_inverse(i, 5));
    out.push_back(ShiftedState::from(box.lower + span.cwiseProduct(u)));
  }
  return out;
}

BaselineSearchResult search_baseline_gains(const ShiftedState& x_stall, const std::vector<double>& d1s,
                                           const std::vector<double>& d2s, const ControllerGains& g,
                                           const PlantParams& p, double t_final, double r_min) {
  BaselineSearchResult res;
  for (double d1 : d1s) {
    for (double d2 : d2s) {
      ControllerGains gg = g;
      gg.d1 = d1;
      gg.d2 = d2;
      SimConfig cfg;
      cfg.mode = Mode::partial_sf;
      cfg.t_final = t_final;
      cfg.output_dt = t_final / 100.0;
      std::ostringstream line;
      line << "d1 = " << d1 << ", d2 = " << d2 << ": ";
      try {
        cfg.x0 = x_stall;
        const ShiftedState stalled = simulate(cfg, gg, p).back().x;
        cfg.x0 = {0.0, x_stall.phi, x_stall.psi};
        const ShiftedState clean = simulate(cfg, gg, p).back().x;
        line << "stall start ends at R = " << stalled.R << ", clean start ends at |x| = "
             << clean.norm();
        res.log.push_back(line.str());
        if (stalled.R > r_min && clean.norm() < 1e-3) {
          res.found = true;
          res.d1 = d1;
          res.d2 = d2;
          res.stalled_end = stalled;
          res.clean_end = clean;
          return res;
        }
      } catch (const std::exception& e) {
        line << "failed: " << e.what();
        res.log.push_back(line.str());
      }
    }
  }
  return res;
}

}  // namespace surge

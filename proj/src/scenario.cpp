#include "surge/scenario.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <sstream>

namespace surge {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t.empty()) throw ScenarioError("missing value for '" + key + "'");
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(d)) {
    throw ScenarioError("bad number for '" + key + "': '" + t + "'");
  }
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  throw ScenarioError("bad boolean for '" + key + "': '" + t + "'");
}

std::complex<double> parse_pole(const std::string& raw) {
  static const std::regex re(
      R"(^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(?:([-+])\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*i)?\s*$)");
  std::smatch m;
  if (!std::regex_match(raw, m, re)) throw ScenarioError("bad pole '" + trim(raw) + "'");
  const double re_part = std::stod(m[1].str());
  double im = 0.0;
  if (m[2].matched) {
    im = std::stod(m[3].str());
    if (m[2].str() == "-") im = -im;
  }
  return {re_part, im};
}

std::string fmt(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

using Setter = std::function<void(Scenario&, const std::string&, const std::string&)>;

template <class F>
Setter num(F f) {
  return [f](Scenario& s, const std::string& k, const std::string& v) { f(s, parse_double(k, v)); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> m = {
      {"mode",
       [](Scenario& s, const std::string&, const std::string& v) {
         try {
           s.sim.mode = parse_mode(trim(v));
         } catch (const std::invalid_argument& e) {
           throw ScenarioError(e.what());
         }
       }},
      {"integrator",
       [](Scenario& s, const std::string&, const std::string& v) {
         try {
           s.sim.integrator = parse_integrator(trim(v));
         } catch (const std::invalid_argument& e) {
           throw ScenarioError(e.what());
         }
       }},
      {"t_final", num([](Scenario& s, double d) { s.sim.t_final = d; })},
      {"h", num([](Scenario& s, double d) { s.sim.h = d; })},
      {"abstol", num([](Scenario& s, double d) { s.sim.abstol = d; })},
      {"reltol", num([](Scenario& s, double d) { s.sim.reltol = d; })},
      {"h_max", num([](Scenario& s, double d) { s.sim.h_max = d; })},
      {"output_dt", num([](Scenario& s, double d) { s.sim.output_dt = d; })},
      {"stop_norm", num([](Scenario& s, double d) { s.sim.stop_norm = d; })},
      {"u_open", num([](Scenario& s, double d) { s.sim.u_open = d; })},
      {"R0", num([](Scenario& s, double d) { s.sim.x0.R = d; })},
      {"phi0", num([](Scenario& s, double d) { s.sim.x0.phi = d; })},
      {"psi0", num([](Scenario& s, double d) { s.sim.x0.psi = d; })},
      {"z1_0", num([](Scenario& s, double d) { s.sim.z1_0 = d; })},
      {"z2_0", num([](Scenario& s, double d) { s.sim.z2_0 = d; })},
      {"Rhat0", num([](Scenario& s, double d) { s.sim.xhat0.R = d; })},
      {"phihat0", num([](Scenario& s, double d) { s.sim.xhat0.phi = d; })},
      {"psihat0", num([](Scenario& s, double d) { s.sim.xhat0.psi = d; })},
      {"sigma", num([](Scenario& s, double d) { s.params.sigma = d; })},
      {"beta", num([](Scenario& s, double d) { s.params.beta = d; })},
      {"psi_c0", num([](Scenario& s, double d) { s.params.psi_c0 = d; })},
      {"k1", num([](Scenario& s, double d) { s.gains.k1 = d; })},
      {"k2", num([](Scenario& s, double d) { s.gains.k2 = d; })},
      {"C", num([](Scenario& s, double d) { s.gains.C = d; })},
      {"k3", num([](Scenario& s, double d) { s.gains.k3 = d; })},
      {"k4", num([](Scenario& s, double d) { s.gains.k4 = d; })},
      {"d1", num([](Scenario& s, double d) { s.gains.d1 = d; })},
      {"d2", num([](Scenario& s, double d) { s.gains.d2 = d; })},
      {"rho", num([](Scenario& s, double d) { s.rho = d; })},
      {"eps_face", num([](Scenario& s, double d) { s.eps_face = d; })},
      {"a1", num([](Scenario& s, double d) { s.cube.a1 = d; })},
      {"b1", num([](Scenario& s, double d) { s.cube.b1 = d; })},
      {"a2", num([](Scenario& s, double d) { s.cube.a2 = d; })},
      {"b2", num([](Scenario& s, double d) { s.cube.b2 = d; })},
      {"a3", num([](Scenario& s, double d) { s.cube.a3 = d; })},
      {"b3", num([](Scenario& s, double d) { s.cube.b3 = d; })},
      {"poles",
       [](Scenario& s, const std::string&, const std::string& v) {
         std::vector<std::complex<double>> ps;
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) ps.push_back(parse_pole(item));
         if (ps.size() != 3) throw ScenarioError("poles needs exactly three entries");
         s.poles = {ps[0], ps[1], ps[2]};
       }},
      {"gamma_scaling",
       [](Scenario& s, const std::string&, const std::string& v) {
         const std::string t = trim(v);
         if (t == "identity") {
           s.gamma_scaling = GammaScaling::identity;
         } else if (t == "high-gain") {
           s.gamma_scaling = GammaScaling::high_gain;
         } else {
           throw ScenarioError("gamma_scaling must be identity or high-gain");
         }
       }},
      {"cube_convention",
       [](Scenario& s, const std::string&, const std::string& v) {
         const std::string t = trim(v);
         if (t == "direct") {
           s.cube.convention = CubeConvention::direct;
         } else if (t == "displayed") {
           s.cube.convention = CubeConvention::displayed;
         } else {
           throw ScenarioError("cube_convention must be direct or displayed");
         }
       }},
      {"strict_gains",
       [](Scenario& s, const std::string& k, const std::string& v) {
         s.strict_gains = parse_bool(k, v);
       }},
      {"csv", [](Scenario& s, const std::string&, const std::string& v) { s.csv_path = trim(v); }},
      {"plot_script",
       [](Scenario& s, const std::string&, const std::string& v) { s.plot_path = trim(v); }},
  };
  return m;
}

}  // namespace

ObserverConfig Scenario::observer() const {
  ObserverConfig cfg = make_observer_config(rho, poles, cube, gamma_scaling);
  cfg.eps_face = eps_face;
  return cfg;
}

Scenario default_scenario() { return Scenario{}; }

void apply_preset(Scenario& s, const std::string& name) {
  if (name != "paper-sec4") throw ScenarioError("unknown preset '" + name + "'");
  s.params = PlantParams{};
  s.gains = ControllerGains{};
  s.poles = default_observer_poles();
  s.cube = CubeBounds{};
  s.gamma_scaling = GammaScaling::high_gain;
  s.rho = 0.1;
  s.sim.mode = Mode::output_feedback;
  s.sim.t_final = 5.0;
  s.sim.h = 1e-5;
  s.sim.output_dt = 1e-3;
  s.sim.x0 = {0.05, 0.05, -0.2};
  s.sim.z1_0 = 0.0;
  s.sim.z2_0 = 0.0;
  s.sim.xhat0 = {0.05, 0.0, 0.0};
}

void set_scenario_key(Scenario& s, const std::string& key, const std::string& value) {
  const auto& m = setters();
  const auto it = m.find(key);
  if (it == m.end()) throw ScenarioError("unknown key '" + key + "'");
  it->second(s, key, value);
}

Scenario parse_scenario(const std::string& text) {
  struct Entry {
    int line;
    std::string key, value;
  };
  std::vector<Entry> entries;
  std::optional<Entry> preset;
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ScenarioError("line " + std::to_string(n) + ": expected 'key = value'");
    }
    Entry e{n, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (e.key == "preset") {
      if (preset) throw ScenarioError("line " + std::to_string(n) + ": preset given twice");
      preset = e;
    } else {
      entries.push_back(e);
    }
  }
  Scenario s = default_scenario();
  try {
    if (preset) apply_preset(s, preset->value);
  } catch (const ScenarioError& e) {
    throw ScenarioError("line " + std::to_string(preset->line) + ": " + e.what());
  }
  for (const Entry& e : entries) {
    try {
      set_scenario_key(s, e.key, e.value);
    } catch (const ScenarioError& err) {
      throw ScenarioError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string bounds_to_text(const CubeBounds& c) {
  std::ostringstream os;
  os << "cube_convention = " << (c.convention == CubeConvention::direct ? "direct" : "displayed")
     << "\n";
  os << "a1 = " << fmt(c.a1) << "\nb1 = " << fmt(c.b1) << "\n";
  os << "a2 = " << fmt(c.a2) << "\nb2 = " << fmt(c.b2) << "\n";
  os << "a3 = " << fmt(c.a3) << "\nb3 = " << fmt(c.b3) << "\n";
  return os.str();
}

std::string scenario_to_text(const Scenario& s) {
  std::ostringstream os;
  os << "mode = " << to_string(s.sim.mode) << "\n";
  os << "t_final = " << fmt(s.sim.t_final) << "\n";
  if (s.sim.integrator) os << "integrator = " << to_string(*s.sim.integrator) << "\n";
  os << "h = " << fmt(s.sim.h) << "\n";
  os << "abstol = " << fmt(s.sim.abstol) << "\nreltol = " << fmt(s.sim.reltol) << "\n";
  os << "h_max = " << fmt(s.sim.h_max) << "\n";
  os << "output_dt = " << fmt(s.sim.output_dt) << "\n";
  os << "stop_norm = " << fmt(s.sim.stop_norm) << "\n";
  os << "u_open = " << fmt(s.sim.u_open) << "\n";
  os << "R0 = " << fmt(s.sim.x0.R) << "\nphi0 = " << fmt(s.sim.x0.phi) << "\npsi0 = "
     << fmt(s.sim.x0.psi) << "\n";
  os << "z1_0 = " << fmt(s.sim.z1_0) << "\nz2_0 = " << fmt(s.sim.z2_0) << "\n";
  os << "Rhat0 = " << fmt(s.sim.xhat0.R) << "\nphihat0 = " << fmt(s.sim.xhat0.phi)
     << "\npsihat0 = " << fmt(s.sim.xhat0.psi) << "\n";
  os << "sigma = " << fmt(s.params.sigma) << "\nbeta = " << fmt(s.params.beta) << "\npsi_c0 = "
     << fmt(s.params.psi_c0) << "\n";
  os << "k1 = " << fmt(s.gains.k1) << "\nk2 = " << fmt(s.gains.k2) << "\nC = " << fmt(s.gains.C)
     << "\n";
  os << "k3 = " << fmt(s.gains.k3) << "\nk4 = " << fmt(s.gains.k4) << "\n";
  os << "d1 = " << fmt(s.gains.d1) << "\nd2 = " << fmt(s.gains.d2) << "\n";
  os << "rho = " << fmt(s.rho) << "\n";
  os << "poles = ";
  for (int i = 0; i < 3; ++i) {
    const auto& pl = s.poles[i];
    os << (i ? ", " : "") << fmt(pl.real());
    if (pl.imag() != 0.0) os << (pl.imag() > 0 ? "+" : "-") << fmt(std::abs(pl.imag())) << "i";
  }
  os << "\n";
  os << "gamma_scaling = " << (s.gamma_scaling == GammaScaling::identity ? "identity" : "high-gain")
     << "\n";
  os << "eps_face = " << fmt(s.eps_face) << "\n";
  os << bounds_to_text(s.cube);
  os << "strict_gains = " << (s.strict_gains ? "true" : "false") << "\n";
  if (!s.csv_path.empty()) os << "csv = " << s.csv_path << "\n";
  if (!s.plot_path.empty()) os << "plot_script = " << s.plot_path << "\n";
  return os.str();
}

void write_csv(std::ostream& os, const Trajectory& tr) {
  os << kCsvHeader << "\n";
  const bool ext = tr.has_extended();
  auto put = [&](double d) { os << ',' << fmt(d); };
  auto put_opt = [&](const std::optional<double>& d) {
    os << ',';
    if (d) os << fmt(*d);
  };
  for (const Sample& s : tr.samples) {
    os << fmt(s.t);
    put(s.x.R);
    put(s.x.phi);
    put(s.x.psi);
    put_opt(ext ? std::optional<double>(s.z1) : std::nullopt);
    put_opt(ext ? std::optional<double>(s.z2) : std::nullopt);
    put_opt(s.xhat ? std::optional<double>(s.xhat->R) : std::nullopt);
    put_opt(s.xhat ? std::optional<double>(s.xhat->phi) : std::nullopt);
    put_opt(s.xhat ? std::optional<double>(s.xhat->psi) : std::nullopt);
    put(s.u);
    put_opt(s.gamma);
    put(s.V);
    put_opt(s.Vbar);
    os << "\n";
  }
}

void write_csv(const std::string& path, const Trajectory& tr) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(out, tr);
}

std::string plot_script(const std::string& csv_path) {
  const std::string name = std::filesystem::path(csv_path).filename().string();
  std::ostringstream os;
  os << R"(#!/usr/bin/env python3
# Renders the trajectory in )" << name << R"( to PNG files next to it.
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = os.path.join(here, ")" << name << R"(")
if len(sys.argv) > 1:
    path = sys.argv[1]

with open(path, newline="") as f:
    rows = list(csv.DictReader(f))

def col(key):
    return [float(r[key]) if r[key] != "" else float("nan") for r in rows]

t = col("t")
stem = os.path.splitext(path)[0]

fig, ax = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
for a, key in zip(ax, ["R", "phi", "psi"]):
    a.plot(t, col(key), label=key)
    hat = key + "hat" if key != "R" else "Rhat"
    if any(r[hat] != "" for r in rows):
        a.plot(t, col(hat), "--", label=hat)
    a.set_ylabel(key)
    a.legend(loc="upper right")
ax[-1].set_xlabel("t")
fig.tight_layout()
fig.savefig(stem + "_states.png", dpi=120)

fig, ax = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
ax[0].plot(t, col("u"))
ax[0].set_ylabel("u")
ax[1].semilogy(t, col("V"), label="V")
if any(r["Vbar"] != "" for r in rows):
    ax[1].semilogy(t, col("Vbar"), label="Vbar")
ax[1].legend(loc="upper right")
ax[1].set_xlabel("t")
fig.tight_layout()
fig.savefig(stem + "_input.png", dpi=120)
)";
  return os.str();
}

void write_plot_script(const std::string& path, const std::string& csv_path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << plot_script(csv_path);
}

std::vector<double> parse_number_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_double("list", item));
  }
  return out;
}

}  // namespace surge

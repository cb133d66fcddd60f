#pragma once

// Scenario files (key = value, # comments), CSV output and plot scripts.

#include <iosfwd>
#include <string>
#include <vector>

#include "surge/control.hpp"
#include "surge/model.hpp"
#include "surge/observer.hpp"
#include "surge/sim.hpp"

namespace surge {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Scenario {
  PlantParams params;
  ControllerGains gains;
  SimConfig sim;
  double rho = 0.1;
  Poles poles = default_observer_poles();
  CubeBounds cube;
  GammaScaling gamma_scaling = GammaScaling::high_gain;
  double eps_face = 1e-9;
  bool strict_gains = true;
  std::string csv_path;
  std::string plot_path;

  ObserverConfig observer() const;
};

/// Defaults shared by every scenario before any key is applied.
Scenario default_scenario();

/// Applies a named preset; throws ScenarioError for unknown names.
void apply_preset(Scenario& s, const std::string& name);

/// Parses scenario text. A `preset` key is applied before all other keys
/// regardless of its position. Unknown keys and malformed values throw
/// ScenarioError with the line number.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

/// Sets one key; throws ScenarioError for unknown keys or bad values.
void set_scenario_key(Scenario& s, const std::string& key, const std::string& value);

/// Scenario text that parses back to the same settings.
std::string scenario_to_text(const Scenario& s);

/// Cube bounds as scenario lines.
std::string bounds_to_text(const CubeBounds& c);

inline constexpr const char* kCsvHeader = "t,R,phi,psi,z1,z2,Rhat,phihat,psihat,u,gamma,V,Vbar";

void write_csv(std::ostream& os, const Trajectory& tr);
void write_csv(const std::string& path, const Trajectory& tr);

/// Python/matplotlib script that reads the CSV next to it and renders PNGs.
std::string plot_script(const std::string& csv_path);
void write_plot_script(const std::string& path, const std::string& csv_path);

/// Parses "0.1, 0.05" style lists.
std::vector<double> parse_number_list(const std::string& s);

}  // namespace surge

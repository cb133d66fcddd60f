#include "surge/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "surge/analysis.hpp"
#include "surge/bounds.hpp"
#include "surge/control.hpp"
#include "surge/scenario.hpp"
#include "surge/sim.hpp"

namespace surge {

namespace {

using nlohmann::json;

std::string num(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", d);
  return buf;
}

// Raised inside a command to end it with a given exit code.
struct Exit {
  int code;
};

struct ScenarioArgs {
  std::string file;
  std::vector<std::string> sets;

  void add(CLI::App* cmd) {
    cmd->add_option("scenario", file, "scenario file (key = value)")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "override a scenario key, e.g. --set rho=0.02")->take_all();
  }

  Scenario load() const {
    Scenario s = file.empty() ? default_scenario() : load_scenario(file);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ScenarioError("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string v) {
        v.erase(0, v.find_first_not_of(" \t"));
        v.erase(v.find_last_not_of(" \t") + 1);
        return v;
      };
      const std::string key = trim(kv.substr(0, eq));
      if (key == "preset") {
        apply_preset(s, trim(kv.substr(eq + 1)));
      } else {
        set_scenario_key(s, key, kv.substr(eq + 1));
      }
    }
    try {
      s.params.validate();
      s.sim.validate();
      if (s.sim.mode == Mode::output_feedback) (void)s.observer();
    } catch (const std::exception& e) {
      throw ScenarioError(e.what());
    }
    return s;
  }
};

bool needs_certificate(Mode m) {
  return m == Mode::full_sf || m == Mode::extended_sf || m == Mode::output_feedback;
}

void require_gains(const Scenario& s, std::ostream& err) {
  if (!s.strict_gains || !needs_certificate(s.sim.mode)) return;
  const GainReport r = check_gains(s.gains.k1, s.gains.k2, s.gains.C, s.params);
  if (r.pass()) return;
  err << "gain certificate fails:";
  for (const auto& c : r.conditions) {
    if (!c.holds) err << "\n  " << c.name << "  (" << num(c.lhs) << " vs " << num(c.rhs) << ")";
  }
  err << "\nrerun with --no-strict-gains or strict_gains = false to simulate anyway\n";
  throw Exit{kExitFailure};
}

void print_diagnostics(const Trajectory& tr, std::ostream& err) {
  const SimDiagnostics& d = tr.diag;
  err << "steps " << d.steps << ", rejected " << d.rejected_steps << ", samples "
      << tr.samples.size() << ", stiffness " << num(d.stiffness_estimate);
  if (tr.mode == Mode::output_feedback) {
    err << ", face events " << d.face_events << ", forced snaps " << d.forced_snaps
        << ", max pre-snap cube violation " << num(d.max_cube_violation);
  }
  if (d.r_clamps) err << ", R clamps " << d.r_clamps;
  if (d.stopped_at_norm) err << ", stopped at t = " << num(tr.back().t);
  err << "\n";
  for (const auto& w : d.warnings) err << "warning: " << w << "\n";
}

Trajectory run(const Scenario& s, const SimConfig& cfg) {
  if (cfg.mode == Mode::output_feedback) {
    const ObserverConfig obs = s.observer();
    return simulate(cfg, s.gains, s.params, &obs);
  }
  return simulate(cfg, s.gains, s.params);
}

json state_json(const ShiftedState& x) { return json{{"R", x.R}, {"phi", x.phi}, {"psi", x.psi}}; }

// ---------------------------------------------------------------- check-gains

int cmd_check_gains(double k1, double k2, double C, double sigma, std::ostream& out) {
  PlantParams p;
  p.sigma = sigma;
  const GainReport r = check_gains(k1, k2, C, p);
  out << "gain certificate for k1 = " << num(k1) << ", k2 = " << num(k2) << ", C = " << num(C)
      << ", sigma = " << num(sigma) << "\n";
  for (const auto& c : r.conditions) {
    out << "  " << (c.holds ? "PASS" : "FAIL") << "  " << std::left << std::setw(76) << c.name
        << " lhs = " << num(c.lhs) << ", rhs = " << num(c.rhs) << "\n";
  }
  out << "  quadratic form eigenvalues: " << num(r.form_eigenvalues(0)) << ", "
      << num(r.form_eigenvalues(1)) << (r.form_positive_definite ? " (positive definite)" : "")
      << "\n";
  out << "  result: " << (r.pass() ? "PASS" : "FAIL") << "\n";

  json j;
  j["k1"] = k1;
  j["k2"] = k2;
  j["C"] = C;
  j["sigma"] = sigma;
  j["pass"] = r.pass();
  j["form_positive_definite"] = r.form_positive_definite;
  j["form_eigenvalues"] = {r.form_eigenvalues(0), r.form_eigenvalues(1)};
  for (const auto& c : r.conditions) {
    j["conditions"].push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"holds", c.holds}});
  }
  out << "json: " << j.dump() << "\n";
  return r.pass() ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------------ simulate

int cmd_simulate(const ScenarioArgs& sa, const std::string& csv_opt, const std::string& plot_opt,
                 bool no_plot, bool no_strict, std::ostream& out, std::ostream& err) {
  Scenario s = sa.load();
  if (no_strict) s.strict_gains = false;
  if (!csv_opt.empty()) s.csv_path = csv_opt;
  if (!plot_opt.empty()) s.plot_path = plot_opt;
  require_gains(s, err);

  const Trajectory tr = run(s, s.sim);
  print_diagnostics(tr, err);
  if (s.csv_path.empty()) {
    write_csv(out, tr);
    return kExitOk;
  }
  write_csv(s.csv_path, tr);
  if (!no_plot) {
    std::string plot = s.plot_path;
    if (plot.empty()) {
      std::filesystem::path pp(s.csv_path);
      pp.replace_extension("");
      plot = pp.string() + "_plot.py";
    }
    write_plot_script(plot, s.csv_path);
    out << "wrote " << s.csv_path << " and " << plot << "\n";
  } else {
    out << "wrote " << s.csv_path << "\n";
  }
  return kExitOk;
}

// ------------------------------------------------------------------- compare

int cmd_compare(const ScenarioArgs& sa, std::optional<double> d1, std::optional<double> d2,
                const std::string& baseline, double t_final, double stop_norm, bool check,
                std::ostream& out, std::ostream& err) {
  Scenario s = sa.load();
  if (d1) s.gains.d1 = *d1;
  if (d2) s.gains.d2 = *d2;
  Mode base_mode;
  try {
    base_mode = parse_mode(baseline);
  } catch (const std::invalid_argument& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }
  if (base_mode != Mode::partial_sf && base_mode != Mode::full_sf) {
    err << "baseline must be partial-sf or full-sf\n";
    return kExitUsage;
  }

  SimConfig cfg = s.sim;
  cfg.integrator = IntegratorKind::rosenbrock;
  cfg.t_final = t_final;
  cfg.stop_norm = stop_norm;
  cfg.h_max = std::max(cfg.h_max, t_final / 100.0);
  cfg.output_dt = t_final / 1000.0;

  auto half = [&](Mode m) {
    SimConfig c = cfg;
    c.mode = m;
    const Trajectory tr = simulate(c, s.gains, s.params);
    const Sample& last = tr.back();
    json j;
    j["mode"] = to_string(m);
    j["t_end"] = last.t;
    j["terminal"] = state_json(last.x);
    j["terminal_norm"] = last.x.norm();
    j["stalled"] = last.x.R > 0.01;
    j["converged"] = last.x.norm() < stop_norm;
    return j;
  };
  const json jb = half(base_mode);
  const json jf = half(Mode::full_sf);

  out << "initial state: R = " << num(cfg.x0.R) << ", phi = " << num(cfg.x0.phi)
      << ", psi = " << num(cfg.x0.psi) << "\n";
  for (const json* j : {&jb, &jf}) {
    const std::string label = (j == &jb) ? "baseline " : "full-sf  ";
    out << label << " (" << (*j)["mode"].get<std::string>() << "): t_end = "
        << num((*j)["t_end"].get<double>()) << ", R = " << num((*j)["terminal"]["R"].get<double>())
        << ", phi = " << num((*j)["terminal"]["phi"].get<double>())
        << ", psi = " << num((*j)["terminal"]["psi"].get<double>())
        << ", |x| = " << num((*j)["terminal_norm"].get<double>())
        << ((*j)["stalled"].get<bool>() ? ", stalled" : "")
        << ((*j)["converged"].get<bool>() ? ", converged" : "") << "\n";
  }
  const bool separates = jb["stalled"].get<bool>() && jf["converged"].get<bool>();
  out << "baseline stalls while full-sf converges: " << (separates ? "yes" : "no") << "\n";
  json j{{"d1", s.gains.d1}, {"d2", s.gains.d2}, {"baseline", jb}, {"full_sf", jf},
         {"separates", separates}};
  out << "json: " << j.dump() << "\n";
  return (check && !separates) ? kExitFailure : kExitOk;
}

// ----------------------------------------------------------------- sweep-rho

struct SweepRow {
  double rho = 0.0;
  std::optional<double> settle;
  double sup = 0.0;
  double min_phihat = 0.0;
  double max_violation = 0.0;
  std::string error;
};

int cmd_sweep_rho(const ScenarioArgs& sa, std::vector<double> rhos, double threshold,
                  std::ostream& out, std::ostream& err) {
  Scenario s = sa.load();
  if (rhos.empty()) {
    err << "--rho needs at least one value\n";
    return kExitUsage;
  }
  for (double r : rhos) {
    if (!(r > 0.0)) {
      err << "rho values must be positive\n";
      return kExitUsage;
    }
  }
  s.sim.mode = Mode::output_feedback;
  require_gains(s, err);

  SimConfig ref_cfg = s.sim;
  ref_cfg.mode = Mode::extended_sf;
  ref_cfg.integrator = IntegratorKind::rk4;
  const Trajectory ref = simulate(ref_cfg, s.gains, s.params);

  std::vector<SweepRow> rows(rhos.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= rhos.size()) return;
        i = next++;
      }
      SweepRow& row = rows[i];
      row.rho = rhos[i];
      try {
        Scenario si = s;
        si.rho = rhos[i];
        const Trajectory tr = run(si, si.sim);
        row.settle = estimation_settling_time(tr, threshold);
        row.sup = sup_distance(tr, ref);
        row.min_phihat = std::numeric_limits<double>::infinity();
        for (const Sample& q : tr.samples) row.min_phihat = std::min(row.min_phihat, q.xhat->phi);
        row.max_violation = tr.diag.max_cube_violation;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  };
  const unsigned n = sweep_threads(rhos.size());
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  const double phi_floor = s.cube.phi_interval().first;
  const double tol = 1e-8;
  std::vector<std::string> problems;
  out << "rho          settle(|xhat-x|<" << num(threshold) << ")   sup|x_of - x_sf|   min phihat"
      << "        max cube violation\n";
  json j;
  for (const SweepRow& r : rows) {
    out << std::left << std::setw(12) << num(r.rho) << " ";
    if (!r.error.empty()) {
      out << "error: " << r.error << "\n";
      problems.push_back("rho = " + num(r.rho) + " failed: " + r.error);
      continue;
    }
    out << std::setw(24) << (r.settle ? num(*r.settle) : std::string("not settled")) << " "
        << std::setw(18) << num(r.sup) << " " << std::setw(17) << num(r.min_phihat) << " "
        << num(r.max_violation) << "\n";
    j["rows"].push_back({{"rho", r.rho},
                         {"settle", r.settle ? json(*r.settle) : json(nullptr)},
                         {"sup_distance", r.sup},
                         {"min_phihat", r.min_phihat},
                         {"max_cube_violation", r.max_violation}});
    if (!r.settle) problems.push_back("rho = " + num(r.rho) + ": estimate never settles");
    if (r.max_violation > tol) {
      problems.push_back("rho = " + num(r.rho) + ": cube violated by " + num(r.max_violation));
    }
    if (!(r.min_phihat > phi_floor - tol)) {
      problems.push_back("rho = " + num(r.rho) + ": phihat dropped to " + num(r.min_phihat));
    }
  }

  // Trends are checked from the largest rho to the smallest.
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].rho > rows[b].rho; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    const SweepRow& a = rows[order[k - 1]];
    const SweepRow& b = rows[order[k]];
    if (!a.error.empty() || !b.error.empty() || a.rho == b.rho) continue;
    if (a.settle && b.settle && !(*b.settle < *a.settle)) {
      problems.push_back("settling time does not decrease from rho = " + num(a.rho) + " (" +
                         num(*a.settle) + ") to rho = " + num(b.rho) + " (" + num(*b.settle) + ")");
    }
    if (!(b.sup < a.sup)) {
      problems.push_back("sup distance does not decrease from rho = " + num(a.rho) + " (" +
                         num(a.sup) + ") to rho = " + num(b.rho) + " (" + num(b.sup) + ")");
    }
  }
  for (const auto& pr : problems) out << "FAIL: " << pr << "\n";
  j["pass"] = problems.empty();
  out << "json: " << j.dump() << "\n";
  return problems.empty() ? kExitOk : kExitFailure;
}

// ----------------------------------------------------------- estimate-bounds

int cmd_estimate_bounds(const ScenarioArgs& sa, int samples, const std::string& mode,
                        double t_final, double margin, const std::string& out_path,
                        std::ostream& out, std::ostream& err) {
  Scenario s = sa.load();
  if (samples < 1) {
    err << "--samples must be at least 1\n";
    return kExitUsage;
  }
  BoundEstimateOptions opt;
  try {
    opt.mode = parse_mode(mode);
  } catch (const std::invalid_argument& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }
  if (opt.mode != Mode::full_sf && opt.mode != Mode::extended_sf) {
    err << "--mode must be full-sf or extended-sf\n";
    return kExitUsage;
  }
  opt.t_final = t_final;
  opt.margin = margin;
  opt.h = s.sim.h;
  const auto starts = halton_points(omega0_box(), static_cast<std::size_t>(samples - 1), true);
  const BoundEstimate be = estimate_cube_bounds(starts, s.gains, s.params, opt);
  if (!be.ok()) {
    for (const auto& f : be.failures) err << "non-convergent: " << f << "\n";
    return kExitFailure;
  }
  std::ostringstream text;
  text << "# cube bounds from " << be.runs << " " << to_string(opt.mode) << " runs over Omega_0, t_final = "
       << num(t_final) << ", margin = " << num(margin) << "\n";
  text << "# observed psi [" << num(be.observed_min(0)) << ", " << num(be.observed_max(0)) << "], phi ["
       << num(be.observed_min(1)) << ", " << num(be.observed_max(1)) << "], w ["
       << num(be.observed_min(2)) << ", " << num(be.observed_max(2)) << "]\n";
  text << bounds_to_text(be.bounds);
  if (out_path.empty()) {
    out << text.str();
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot write '" + out_path + "'");
    f << text.str();
    out << "wrote " << out_path << "\n";
  }
  return kExitOk;
}

}  // namespace

unsigned sweep_threads(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SURGE_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) n = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, jobs)));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compressor stall/surge control toolkit on the three-state Moore-Greitzer model",
               "surge_lab"};
  app.require_subcommand(1);

  double k1 = 25.0, k2 = 1.1e5, C = 0.26, sigma = 7.0;
  auto* gains_cmd = app.add_subcommand("check-gains", "evaluate the stability certificate for (k1, k2, C)");
  gains_cmd->add_option("--k1", k1, "flow gain")->capture_default_str();
  gains_cmd->add_option("--k2", k2, "pressure gain")->capture_default_str();
  gains_cmd->add_option("--C", C, "weight on R in V")->capture_default_str();
  gains_cmd->add_option("--sigma", sigma, "stall growth parameter")->capture_default_str();

  ScenarioArgs sim_args;
  std::string csv, plot;
  bool no_plot = false, no_strict = false;
  auto* sim_cmd = app.add_subcommand("simulate", "run one scenario and write a CSV trajectory");
  sim_args.add(sim_cmd);
  sim_cmd->add_option("--csv", csv, "output CSV (default: scenario 'csv' key, else stdout)");
  sim_cmd->add_option("--plot", plot, "plot script path (default: next to the CSV)");
  sim_cmd->add_flag("--no-plot", no_plot, "do not write a plot script");
  sim_cmd->add_flag("--no-strict-gains", no_strict, "simulate even if the gain certificate fails");

  ScenarioArgs cmp_args;
  std::optional<double> d1, d2;
  std::string baseline = "partial-sf";
  double cmp_t = 1e7, cmp_stop = 1e-6;
  bool cmp_check = false;
  auto* cmp_cmd = app.add_subcommand("compare", "partial-state baseline against full-state feedback");
  cmp_args.add(cmp_cmd);
  cmp_cmd->add_option("--d1", d1, "baseline pressure gain");
  cmp_cmd->add_option("--d2", d2, "baseline flow gain");
  cmp_cmd->add_option("--baseline", baseline, "baseline mode (partial-sf or full-sf)")->capture_default_str();
  cmp_cmd->add_option("--t-final", cmp_t, "horizon for both runs")->capture_default_str();
  cmp_cmd->add_option("--stop-norm", cmp_stop, "stop when |x| drops below this")->capture_default_str();
  cmp_cmd->add_flag("--check", cmp_check, "exit 1 unless the baseline stalls and full-sf converges");

  ScenarioArgs sweep_args;
  std::string rho_list;
  double threshold = 0.01;
  auto* sweep_cmd = app.add_subcommand("sweep-rho", "output-feedback runs over observer speeds");
  sweep_args.add(sweep_cmd);
  sweep_cmd->add_option("--rho", rho_list, "comma-separated rho values")->required();
  sweep_cmd->add_option("--threshold", threshold, "settling threshold for |xhat - x|")->capture_default_str();

  ScenarioArgs eb_args;
  int samples = 64;
  std::string eb_mode = "extended-sf", eb_out;
  double eb_t = 5.0, eb_margin = 0.1;
  auto* eb_cmd = app.add_subcommand("estimate-bounds", "observer cube from state-feedback runs over Omega_0");
  eb_args.add(eb_cmd);
  eb_cmd->add_option("--samples", samples, "number of starts (origin first, then Halton points)")->capture_default_str();
  eb_cmd->add_option("--mode", eb_mode, "full-sf or extended-sf")->capture_default_str();
  eb_cmd->add_option("--t-final", eb_t, "horizon per run")->capture_default_str();
  eb_cmd->add_option("--margin", eb_margin, "relative margin")->capture_default_str();
  eb_cmd->add_option("--out", eb_out, "output file (default stdout)");

  std::string preset_name;
  auto* preset_cmd = app.add_subcommand("preset", "print a preset as a scenario file");
  preset_cmd->add_option("name", preset_name, "preset name")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << "see --help\n";
    return kExitUsage;
  }

  try {
    if (*gains_cmd) return cmd_check_gains(k1, k2, C, sigma, out);
    if (*sim_cmd) return cmd_simulate(sim_args, csv, plot, no_plot, no_strict, out, err);
    if (*cmp_cmd) return cmd_compare(cmp_args, d1, d2, baseline, cmp_t, cmp_stop, cmp_check, out, err);
    if (*sweep_cmd) {
      std::vector<double> rhos;
      try {
        rhos = parse_number_list(rho_list);
      } catch (const ScenarioError& e) {
        err << "--rho: " << e.what() << "\n";
        return kExitUsage;
      }
      return cmd_sweep_rho(sweep_args, rhos, threshold, out, err);
    }
    if (*eb_cmd) {
      return cmd_estimate_bounds(eb_args, samples, eb_mode, eb_t, eb_margin, eb_out, out, err);
    }
    if (*preset_cmd) {
      Scenario s = default_scenario();
      apply_preset(s, preset_name);
      out << "# preset " << preset_name << "\n" << scenario_to_text(s);
      return kExitOk;
    }
  } catch (const Exit& e) {
    return e.code;
  } catch (const ScenarioError& e) {
    err << "scenario error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace surge

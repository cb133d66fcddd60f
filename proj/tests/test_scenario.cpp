#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "surge/scenario.hpp"

using namespace surge;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string l;
  while (std::getline(is, l)) out.push_back(l);
  return out;
}

}  // namespace

TEST(Scenario, PresetPinsPublishedValues) {
  const Scenario s = parse_scenario("preset = paper-sec4\n");
  EXPECT_EQ(s.params.sigma, 7.0);
  EXPECT_NEAR(s.params.beta2(), 0.5, 1e-15);
  EXPECT_EQ(s.gains.k1, 25.0);
  EXPECT_EQ(s.gains.k2, 1.1e5);
  EXPECT_EQ(s.gains.C, 0.26);
  EXPECT_EQ(s.gains.k3, 1.0);
  EXPECT_EQ(s.gains.k4, 1.0);
  EXPECT_EQ(s.sim.mode, Mode::output_feedback);
  EXPECT_EQ(s.sim.xhat0.vec(), Vec3(0.05, 0.0, 0.0));
  EXPECT_EQ(s.cube.a1, -2.0);
  EXPECT_EQ(s.cube.b1, 1.0);
  EXPECT_EQ(s.cube.a2, -0.5);
  EXPECT_EQ(s.cube.b2, 1.0);
  EXPECT_EQ(s.cube.a3, -0.5);
  EXPECT_EQ(s.cube.b3, 0.3);
  EXPECT_EQ(s.poles, default_observer_poles());
  const ObserverConfig o = s.observer();
  EXPECT_NEAR(o.L(1), 11.0, 1e-12);
}

TEST(Scenario, PresetAppliesBeforeOtherKeys) {
  const Scenario s = parse_scenario("rho = 0.02\nmode = full-sf\npreset = paper-sec4\n");
  EXPECT_EQ(s.rho, 0.02);
  EXPECT_EQ(s.sim.mode, Mode::full_sf);
}

TEST(Scenario, CommentsBlankLinesAndWhitespace) {
  const Scenario s = parse_scenario("# header\n\n  k1 =  30   # trailing\n\tk2=2e5\n");
  EXPECT_EQ(s.gains.k1, 30.0);
  EXPECT_EQ(s.gains.k2, 2e5);
}

TEST(Scenario, ErrorsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      parse_scenario(text);
    } catch (const ScenarioError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("k1 = 1\nbogus = 3\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("k1 = 1\nbogus = 3\n").find("unknown key"), std::string::npos);
  EXPECT_NE(message("k1 = abc\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("\n\nk1\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("preset = nope\n").find("unknown preset"), std::string::npos);
  EXPECT_NE(message("mode = fast\n").find("unknown mode"), std::string::npos);
  EXPECT_NE(message("poles = -1, -2\n").find("three"), std::string::npos);
  EXPECT_NE(message("strict_gains = maybe\n").find("boolean"), std::string::npos);
  EXPECT_NE(message("t_final = 1e999\n").find("bad number"), std::string::npos);
  EXPECT_NE(message("preset = paper-sec4\npreset = paper-sec4\n").find("twice"), std::string::npos);
}

TEST(Scenario, ComplexPolesAndOptions) {
  const Scenario s = parse_scenario(
      "poles = -2, -1+2i, -1 - 2i\ngamma_scaling = identity\ncube_convention = displayed\n"
      "a2 = 0.5\na3 = 0.5\nstrict_gains = no\nintegrator = rk45\n");
  EXPECT_EQ(s.poles[1], std::complex<double>(-1.0, 2.0));
  EXPECT_EQ(s.poles[2], std::complex<double>(-1.0, -2.0));
  EXPECT_EQ(s.gamma_scaling, GammaScaling::identity);
  EXPECT_EQ(s.cube.phi_interval().first, -0.5);
  EXPECT_FALSE(s.strict_gains);
  EXPECT_EQ(s.sim.integrator, IntegratorKind::rk45);
  EXPECT_NEAR(s.observer().L(2), 10.0, 1e-12);
}

TEST(Scenario, TextRoundTrip) {
  Scenario s = parse_scenario("preset = paper-sec4\nrho = 0.005\nR0 = 0.0123456789\nk3 = 2.5\n"
                              "poles = -1.5, -1+0.5i, -1-0.5i\ncsv = out.csv\n");
  const Scenario t = parse_scenario(scenario_to_text(s));
  EXPECT_EQ(scenario_to_text(t), scenario_to_text(s));
  EXPECT_EQ(t.rho, 0.005);
  EXPECT_EQ(t.sim.x0.R, 0.0123456789);
  EXPECT_EQ(t.poles, s.poles);
  EXPECT_EQ(t.csv_path, "out.csv");
}

TEST(Scenario, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "surge_lab_scenario_test.txt";
  {
    std::ofstream f(path);
    f << "preset = paper-sec4\nmode = extended-sf\n";
  }
  EXPECT_EQ(load_scenario(path.string()).sim.mode, Mode::extended_sf);
  std::filesystem::remove(path);
  EXPECT_THROW(load_scenario(path.string()), ScenarioError);
}

TEST(Scenario, NumberList) {
  EXPECT_EQ(parse_number_list("0.1, 0.05,0.02"), (std::vector<double>{0.1, 0.05, 0.02}));
  EXPECT_THROW(parse_number_list("0.1, x"), std::exception);
}

TEST(Csv, HeaderAndEmptyColumnsForPlantModes) {
  SimConfig c;
  c.mode = Mode::full_sf;
  c.t_final = 0.01;
  c.output_dt = 1e-3;
  const Trajectory tr = simulate(c, ControllerGains{}, PlantParams{});
  std::ostringstream os;
  write_csv(os, tr);
  const auto ls = lines(os.str());
  ASSERT_GE(ls.size(), 2u);
  EXPECT_EQ(ls[0], "t,R,phi,psi,z1,z2,Rhat,phihat,psihat,u,gamma,V,Vbar");
  EXPECT_EQ(ls.size(), tr.samples.size() + 1);
  const auto cells = split(ls[1], ',');
  ASSERT_EQ(cells.size(), 13u);
  for (int i : {4, 5, 6, 7, 8, 12}) EXPECT_TRUE(cells[i].empty()) << i;
  EXPECT_EQ(std::stod(cells[1]), 0.05);
  EXPECT_EQ(std::stod(cells[3]), -0.2);
  // Values print with full precision and parse back exactly.
  const auto last = split(ls.back(), ',');
  EXPECT_EQ(std::stod(last[2]), tr.back().x.phi);
}

TEST(Csv, ObserverColumnsFilledForOutputFeedback) {
  const Scenario s = parse_scenario("preset = paper-sec4\nt_final = 0.002\n");
  const ObserverConfig obs = s.observer();
  const Trajectory tr = simulate(s.sim, s.gains, s.params, &obs);
  std::ostringstream os;
  write_csv(os, tr);
  const auto ls = lines(os.str());
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto cells = split(ls[i], ',');
    ASSERT_EQ(cells.size(), 13u);
    for (const auto& c : cells) EXPECT_FALSE(c.empty());
  }
  const auto first = split(ls[1], ',');
  EXPECT_EQ(std::stod(first[6]), 0.05);
}

TEST(Csv, TerminalTimeZeroHasOneRow) {
  SimConfig c;
  c.t_final = 0.0;
  std::ostringstream os;
  write_csv(os, simulate(c, ControllerGains{}, PlantParams{}));
  EXPECT_EQ(lines(os.str()).size(), 2u);
}

TEST(PlotScript, ReferencesCsv) {
  const std::string py = plot_script("runs/of.csv");
  EXPECT_NE(py.find("of.csv"), std::string::npos);
  EXPECT_NE(py.find("matplotlib"), std::string::npos);
  EXPECT_NE(py.find("_states.png"), std::string::npos);
}

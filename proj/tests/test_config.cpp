#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "wgqed/config.hpp"
#include "wgqed/errors.hpp"

using namespace wgqed;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("values and pi forms") {
  RunConfig c;
  set_config_value(c, "phi_tau1", "3pi");
  CHECK(std::abs(*c.phi_tau1 - 3 * kPi) < 1e-15);
  set_config_value(c, "phi_tau3", "-pi/2");
  CHECK(std::abs(*c.phi_tau3 + kPi / 2) < 1e-15);
  set_config_value(c, "phi_tau3", "0.25");
  CHECK(*c.phi_tau3 == 0.25);
  set_config_value(c, "gamma", "1, 0.5,2");
  CHECK(c.gamma == std::array<double, 3>{1.0, 0.5, 2.0});
  set_config_value(c, "mode", "nm");
  CHECK(c.mode == Mode::NonMarkovian);
  set_config_value(c, "stop_at_steady", "false");
  CHECK(!c.stop_at_steady);
  set_config_value(c, "trotter", "first");
  CHECK(c.trotter == TrotterOrder::First);
  set_config_value(c, "markovian_phases", "pi, 0, 2pi");
  CHECK(std::abs((*c.markovian_phases)[2] - 2 * kPi) < 1e-15);

  CHECK_THROWS_AS(set_config_value(c, "nope", "1"), ArgumentError);
  CHECK_THROWS_AS(set_config_value(c, "dt", "abc"), ArgumentError);
  CHECK_THROWS_AS(set_config_value(c, "dt", "-1"), ArgumentError);
  CHECK_THROWS_AS(set_config_value(c, "p", "1"), ArgumentError);
  CHECK_THROWS_AS(set_config_value(c, "gamma", "1,2"), ArgumentError);
  CHECK_THROWS_AS(set_config_value(c, "preset", "quadruply"), ArgumentError);
  CHECK_THROWS_AS(set_config_value(c, "sweep_phi1_points", "1"), ArgumentError);
  CHECK_THROWS_AS(set_config_value(c, "oracle", "magic"), ArgumentError);
}

TEST_CASE("every key has help text") {
  for (const auto& k : config_keys()) {
    CHECK(!k.name.empty());
    CHECK(!k.help.empty());
  }
}

TEST_CASE("config text") {
  RunConfig c;
  apply_config_text(c, "# recipe\nmode = non-markovian\ntau1 = 1\ntau3 = 0.5  # short arm\n\nloop_phase = 3pi\n");
  CHECK(c.mode == Mode::NonMarkovian);
  CHECK(c.tau3 == 0.5);
  try {
    apply_config_text(c, "tau1 = 1\nbogus line\n");
    FAIL("expected an error");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_file(c, "/nonexistent/file.cfg"), ArgumentError);
}

TEST_CASE("presets are normalized") {
  for (const auto& name : preset_names()) {
    const SystemState s = preset_state(name);
    double n2 = 0.0;
    for (const auto& a : s) n2 += std::norm(a);
    CHECK(std::abs(n2 - 1.0) < 1e-15);
  }
  CHECK(preset_state("triply")[7] == cplx(1.0));
  CHECK(preset_state("vacuum")[0] == cplx(1.0));
  CHECK(std::abs(preset_state("single-sym")[4] - 1.0 / std::sqrt(3.0)) < 1e-15);
  CHECK(std::abs(preset_state("double-sym")[3] - 1.0 / std::sqrt(3.0)) < 1e-15);

  RunConfig c;
  set_config_value(c, "amplitudes", "0,0,0,0,0,0,3,4");
  CHECK(std::abs((*c.amplitudes)[7] - 0.8) < 1e-15);
  set_config_value(c, "amplitudes", "0,0, 0,0, 0,0, 0,0, 0,0, 0,0, 0,1, 1,0");
  CHECK(std::abs((*c.amplitudes)[6] - cplx(0.0, 1.0 / std::sqrt(2.0))) < 1e-15);
  CHECK_THROWS_AS(set_config_value(c, "amplitudes", "0,0,0,0,0,0,0,0"), ArgumentError);
}

TEST_CASE("resolve: Markovian defaults") {
  RunConfig c;
  const ResolvedRun r = resolve(c);
  CHECK(r.params.mode == Mode::Markovian);
  CHECK(r.params.dt == 0.05);
  CHECK(r.options.max_steps == 1000);
  CHECK(r.params.initial_system[7] == cplx(1.0));
  CHECK(r.options.truncation.max_bond == 128);
  CHECK(r.options.truncation.cutoff == 1e-12);
  CHECK(!r.dt_adjusted);

  c.gamma = {2.0, 2.0, 2.0};
  c.t_end = 3.0;
  const ResolvedRun g = resolve(c);
  CHECK(g.params.dt == 0.025);
  CHECK(g.options.max_steps == 120);
  c.max_steps = 10;
  CHECK_THROWS_AS((void)resolve(c), ArgumentError);
}

TEST_CASE("resolve: non-Markovian step selection") {
  RunConfig c;
  c.mode = Mode::NonMarkovian;
  c.tau1 = 1.0;
  c.tau3 = 0.5;
  ResolvedRun r = resolve(c);
  CHECK(r.params.m1 * 2 == r.params.m3 * 4);
  CHECK(std::abs(r.params.dt * static_cast<double>(r.params.m3) - 0.25) < 1e-12);
  CHECK(r.params.dt <= 0.05);

  c.dt = 0.03;  // 0.25 / 0.03 is not whole: lowered to 0.25 / 9
  r = resolve(c);
  CHECK(r.dt_adjusted);
  CHECK(r.params.m3 == 9);
  CHECK(r.params.m1 == 18);
  CHECK(std::abs(r.params.dt - 0.25 / 9) < 1e-15);

  c.dt.reset();
  c.loop_phase = 3 * kPi;
  r = resolve(c);
  CHECK(std::abs(r.params.loop_phase() - 3 * kPi) < 1e-12);
  CHECK(std::abs(r.params.phi_tau1 - 4 * kPi) < 1e-12);
  CHECK(std::abs(r.params.phi_tau3 - 2 * kPi) < 1e-12);
  c.phi_tau1 = 1.0;
  CHECK_THROWS_AS((void)resolve(c), ArgumentError);

  RunConfig bad;
  bad.mode = Mode::NonMarkovian;
  CHECK_THROWS_AS((void)resolve(bad), ArgumentError);
  bad.tau1 = 1.0;
  bad.markovian_phases = std::array<double, 3>{0, 0, 0};
  CHECK_THROWS_AS((void)resolve(bad), ArgumentError);
}

TEST_CASE("CSV writers") {
  Trajectory t;
  StepRecord r;
  r.step = 2;
  r.t_gamma = 0.1;
  r.populations = {0.5, 0.25, 0.125};
  r.total_excitation = 3.0;
  r.max_bond = 4;
  t.records.push_back(r);
  t.finalized_bins.push_back({-1, Channel::Left, 0.0625, 3});
  std::ostringstream a, b, s;
  write_trajectory_csv(a, t);
  CHECK(a.str().rfind("step,t_gamma,pop1,pop2,pop3,norm,total_excitation,discarded_weight_cum,max_bond\n", 0) == 0);
  CHECK(a.str().find("\n2,") != std::string::npos);
  write_bins_csv(b, t);
  CHECK(b.str().rfind("bin_index,channel,occupation\n-1,L,", 0) == 0);
  write_sweep_csv(s, {{0.0, 1.0, 3.0, {0.0, 0.0, 0.0}}});
  CHECK(s.str().rfind("phi1,phi3,I,pop1_ss,pop2_ss,pop3_ss\n", 0) == 0);
}

TEST_CASE("helpers") {
  CHECK(with_suffix("out.csv", "triply") == "out_triply.csv");
  CHECK(with_suffix("dir.v2/out", "x") == "dir.v2/out_x");
  const auto l = linspace(0.0, 2 * kPi, 8);
  CHECK(l.size() == 8);
  CHECK(l.front() == 0.0);
  CHECK(l.back() == 2 * kPi);
  CHECK(steps_for(1.0, 0.1) == 10);
}

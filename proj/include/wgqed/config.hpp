#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "wgqed/evolution.hpp"
#include "wgqed/model.hpp"

namespace wgqed {

// Everything a command line run needs. Rates are in units of gamma, times in
// units of 1/gamma, phases in radians.
struct RunConfig {
  std::array<double, kNumEmitters> gamma{1.0, 1.0, 1.0};
  double delta1 = 0.0;
  double delta3 = 0.0;
  double tau1 = 0.0;
  double tau3 = 0.0;
  std::optional<double> dt;
  std::optional<double> phi_tau1;
  std::optional<double> phi_tau3;
  std::optional<double> loop_phase;  // omega_0 tau, split over tau1 and tau3
  std::size_t p = 3;
  Mode mode = Mode::Markovian;
  std::string preset = "triply";
  std::optional<SystemState> amplitudes;
  std::optional<std::array<double, kNumEmitters>> markovian_phases;
  TrotterOrder trotter = TrotterOrder::SecondSymmetric;
  bool fuse = true;

  std::optional<std::int64_t> max_steps;
  std::optional<double> t_end;
  std::int64_t record_every = 1;
  double steady_tol = 1e-5;
  std::int64_t steady_window = 0;
  bool stop_at_steady = true;
  std::size_t max_bond = 128;
  double cutoff = 1e-12;
  double swap_cutoff = 0.0;
  double discard_budget = 1e-6;

  std::string output = "trajectory.csv";
  std::string bins_output;
  std::string checkpoint;

  std::size_t sweep_phi1_points = 8;
  std::size_t sweep_phi3_points = 8;
  std::vector<std::string> presets;

  std::string oracle = "brute-force";
  std::int64_t oracle_steps = 6;
  std::optional<double> tolerance;
  double dt_ode = 1e-4;

  std::uint64_t seed = 0;  // reserved; every run is deterministic
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Every key accepted by config files and mirrored as --flags.
[[nodiscard]] const std::vector<ConfigKey>& config_keys();

// Throws ArgumentError on unknown keys or malformed values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

// Flat "key = value" lines; '#' starts a comment.
void apply_config_text(RunConfig& config, std::string_view text);
void apply_config_file(RunConfig& config, const std::string& path);

// Normalized amplitudes of a named initial state.
[[nodiscard]] SystemState preset_state(const std::string& name);
[[nodiscard]] const std::vector<std::string>& preset_names();

struct ResolvedRun {
  ModelParams params;
  RunOptions options;
  double dt_requested = 0.0;
  bool dt_adjusted = false;
};

// Picks the step (default min(0.05, shortest half-delay / 4)), lowers it until
// both half-delays are whole multiples, and fills in the run options.
[[nodiscard]] ResolvedRun resolve(const RunConfig& config);

// Step count for a duration, rounding to the nearest step.
[[nodiscard]] std::int64_t steps_for(double duration, double dt);

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);
void write_bins_csv(std::ostream& out, const Trajectory& trajectory);

struct SweepRow {
  double phi1 = 0.0;
  double phi3 = 0.0;
  double integrated = 0.0;
  std::array<double, kNumEmitters> populations{};
};
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// "out.csv" + "triply" -> "out_triply.csv"
[[nodiscard]] std::string with_suffix(const std::string& path, const std::string& suffix);

// Evenly spaced points on [lo, hi], both ends included.
[[nodiscard]] std::vector<double> linspace(double lo, double hi, std::size_t n);

}  // namespace wgqed

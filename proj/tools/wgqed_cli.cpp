// Command line front end: trace, sweep-phases, compare-oracle, convergence.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "wgqed/config.hpp"
#include "wgqed/errors.hpp"
#include "wgqed/evolution.hpp"
#include "wgqed/oracle.hpp"

namespace {

using namespace wgqed;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;
constexpr int kExitVerification = 4;

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const json& summary) { std::cout << summary.dump() << std::endl; }

double finite_or_neg(double x) { return std::isfinite(x) ? x : -1.0; }

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  return out;
}

json run_summary(const ResolvedRun& r, const RunResult& res) {
  const auto& last = res.trajectory.records.back();
  json s;
  s["mode"] = to_string(r.params.mode);
  s["dt"] = r.params.dt;
  s["dt_requested"] = r.dt_requested;
  s["dt_adjusted"] = r.dt_adjusted;
  s["m1"] = r.params.m1;
  s["m3"] = r.params.m3;
  s["p"] = r.params.bin_dim;
  s["steps"] = res.trajectory.steps_taken;
  s["t_gamma"] = last.t_gamma;
  s["steady_state"] = res.verdict.reached;
  s["steady_at_step"] = res.verdict.at_step;
  s["residual"] = finite_or_neg(res.verdict.residual);
  s["pop1"] = last.populations[0];
  s["pop2"] = last.populations[1];
  s["pop3"] = last.populations[2];
  s["integrated_reservoir"] = integrated_reservoir(res.trajectory, r.params);
  s["norm"] = last.norm;
  s["total_excitation"] = last.total_excitation;
  s["discarded_weight"] = last.discarded_weight_cum;
  s["max_bond"] = last.max_bond;
  return s;
}

void note_adjustment(const ResolvedRun& r) {
  if (r.dt_adjusted)
    std::cerr << "note: dt lowered from " << r.dt_requested << " to " << r.params.dt
              << " so both half-delays are whole steps (m1 = " << r.params.m1 << ", m3 = " << r.params.m3 << ")\n";
}

int cmd_trace(const RunConfig& cfg) {
  const ResolvedRun r = resolve(cfg);
  note_adjustment(r);
  TimeBinMPS final_state;
  const RunResult res = run(r.params, r.options, cfg.checkpoint.empty() ? nullptr : &final_state);
  {
    auto out = open_output(cfg.output);
    write_trajectory_csv(out, res.trajectory);
  }
  if (!cfg.bins_output.empty()) {
    auto out = open_output(cfg.bins_output);
    write_bins_csv(out, res.trajectory);
  }
  if (!cfg.checkpoint.empty()) {
    std::ofstream out(cfg.checkpoint, std::ios::binary);
    if (!out) throw ArgumentError("cannot write '" + cfg.checkpoint + "'");
    final_state.save(out);
  }
  json s{{"command", "trace"}, {"preset", cfg.amplitudes ? std::string("amplitudes") : cfg.preset}};
  s.update(run_summary(r, res));
  s["output"] = cfg.output;
  emit(s);
  return kExitOk;
}

// Runs f(i) for i in [0, n) on a pool of workers; rethrows the first failure
// in index order.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F f) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int cmd_sweep(const RunConfig& cfg) {
  if (cfg.mode != Mode::Markovian) throw ArgumentError("sweep-phases needs mode = markovian");
  const std::vector<std::string> presets = cfg.presets.empty() ? std::vector<std::string>{cfg.preset} : cfg.presets;
  const auto phi1 = linspace(0.0, 2.0 * std::numbers::pi, cfg.sweep_phi1_points);
  const auto phi3 = linspace(0.0, 2.0 * std::numbers::pi, cfg.sweep_phi3_points);
  const std::size_t points = phi1.size() * phi3.size();

  for (const auto& preset : presets) {
    std::vector<SweepRow> rows(points);
    std::vector<double> discarded(points, 0.0);
    std::vector<std::size_t> bonds(points, 0);
    std::vector<char> steady(points, 0);
    // Validate once up front so configuration errors are not reported per point.
    {
      RunConfig probe = cfg;
      probe.preset = preset;
      probe.amplitudes.reset();
      (void)resolve(probe);
    }
    parallel_for(points, cfg.threads, [&](std::size_t k) {
      RunConfig c = cfg;
      c.preset = preset;
      c.amplitudes.reset();
      c.markovian_phases = std::array<double, kNumEmitters>{phi1[k / phi3.size()], 0.0, phi3[k % phi3.size()]};
      const ResolvedRun r = resolve(c);
      const RunResult res = run(r.params, r.options);
      const auto& last = res.trajectory.records.back();
      rows[k] = {phi1[k / phi3.size()], phi3[k % phi3.size()], integrated_reservoir(res.trajectory, r.params),
                 last.populations};
      discarded[k] = last.discarded_weight_cum;
      bonds[k] = last.max_bond;
      steady[k] = res.verdict.reached ? 1 : 0;
    });

    const std::string path = presets.size() > 1 ? with_suffix(cfg.output, preset) : cfg.output;
    {
      auto out = open_output(path);
      write_sweep_csv(out, rows);
    }
    double i_min = std::numeric_limits<double>::infinity();
    double i_max = -i_min;
    double pop_max = 0.0;
    for (const auto& row : rows) {
      i_min = std::min(i_min, row.integrated);
      i_max = std::max(i_max, row.integrated);
      for (double p : row.populations) pop_max = std::max(pop_max, p);
    }
    emit({{"command", "sweep-phases"},
          {"preset", preset},
          {"points", points},
          {"I_min", i_min},
          {"I_max", i_max},
          {"max_final_population", pop_max},
          {"all_steady", std::all_of(steady.begin(), steady.end(), [](char x) { return x != 0; })},
          {"discarded_weight_max", *std::max_element(discarded.begin(), discarded.end())},
          {"max_bond", *std::max_element(bonds.begin(), bonds.end())},
          {"output", path}});
  }
  return kExitOk;
}

int cmd_compare(const RunConfig& cfg) {
  ResolvedRun r = resolve(cfg);
  note_adjustment(r);
  r.options.stop_at_steady = false;
  r.options.record_every = 1;
  json s{{"command", "compare-oracle"}, {"oracle", cfg.oracle}};
  ComparisonReport rep;
  RunResult res;
  if (cfg.oracle == "brute-force") {
    r.options.max_steps = cfg.oracle_steps;
    r.options.truncation = {std::numeric_limits<std::size_t>::max(), 0.0};
    r.options.swap = {};
    r.options.discard_budget = std::numeric_limits<double>::infinity();
    BruteForceResult bf;
    try {
      bf = brute_force_run(r.params, cfg.oracle_steps);
    } catch (const OracleError& e) {
      throw ArgumentError(e.what());
    }
    res = run(r.params, r.options);
    PopulationSeries ref;
    for (const auto& rec : bf.records) {
      ref.times.push_back(static_cast<double>(rec.step) * r.params.dt);
      ref.populations.push_back(rec.populations);
    }
    rep = compare(population_series(res.trajectory), ref, cfg.tolerance.value_or(1e-10));
    s["stored_amplitudes"] = bf.stored_amplitudes;
  } else {
    if (r.params.mode != Mode::Markovian)
      throw ArgumentError("the master-equation oracle needs mode = markovian");
    res = run(r.params, r.options);
    const double t_end = static_cast<double>(res.trajectory.steps_taken) * r.params.dt;
    const LindbladResult lr = lindblad_run(r.params, t_end, cfg.dt_ode);
    rep = compare(population_series(res.trajectory), lr.series, cfg.tolerance.value_or(2e-2), true);
    s["max_trace_drift"] = lr.max_trace_drift;
    s["min_eigenvalue"] = lr.min_eigenvalue;
  }
  s["dt"] = r.params.dt;
  s["steps"] = res.trajectory.steps_taken;
  s["points"] = rep.points;
  s["max_abs_diff"] = rep.max_abs_diff;
  s["max_diff"] = rep.max_diff;
  s["tolerance"] = cfg.tolerance.value_or(cfg.oracle == "brute-force" ? 1e-10 : 2e-2);
  s["pass"] = rep.pass;
  s["discarded_weight"] = res.trajectory.records.back().discarded_weight_cum;
  s["max_bond"] = res.trajectory.records.back().max_bond;
  emit(s);
  return rep.pass ? kExitOk : kExitVerification;
}

int cmd_convergence(const RunConfig& cfg) {
  RunConfig base = cfg;
  base.stop_at_steady = false;
  const ResolvedRun r0 = resolve(base);
  note_adjustment(r0);
  const double t_end = static_cast<double>(r0.options.max_steps) * r0.params.dt;

  auto trace = [&](std::size_t p, double dt) {
    RunConfig c = base;
    c.p = p;
    c.dt = dt;
    c.max_steps.reset();
    c.t_end = t_end;
    const ResolvedRun r = resolve(c);
    return run(r.params, r.options);
  };
  const RunResult coarse = trace(cfg.p, r0.params.dt);
  const RunResult p_up = trace(cfg.p + 1, r0.params.dt);
  const RunResult half = trace(cfg.p, r0.params.dt / 2);
  const RunResult quarter = trace(cfg.p, r0.params.dt / 4);

  const auto sc = population_series(coarse.trajectory);
  const double p_dev = compare(sc, population_series(p_up.trajectory), 1e-3).max_diff;
  const double d1 = compare(sc, population_series(half.trajectory), 1.0, true).max_diff;
  const double d2 = compare(population_series(half.trajectory), population_series(quarter.trajectory), 1.0, true).max_diff;
  const double ratio = d1 > 0.0 ? d2 / d1 : 0.0;
  double discarded = 0.0;
  std::size_t bond = 0;
  for (const auto* res : {&coarse, &p_up, &half, &quarter}) {
    discarded = std::max(discarded, res->trajectory.records.back().discarded_weight_cum);
    bond = std::max(bond, res->trajectory.records.back().max_bond);
  }
  const bool pass = p_dev <= 1e-3;
  emit({{"command", "convergence"},
        {"dt", r0.params.dt},
        {"p", cfg.p},
        {"t_gamma", coarse.trajectory.records.back().t_gamma},
        {"p_deviation", p_dev},
        {"dt_deviation", d1},
        {"dt_half_deviation", d2},
        {"dt_halving_ratio", ratio},
        {"pass", pass},
        {"discarded_weight", discarded},
        {"max_bond", bond}});
  return pass ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-bin MPS simulator for three emitters in a waveguide with delayed feedback"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  std::string config_path;
  std::map<std::string, std::string> flags;
  std::vector<CLI::App*> subs;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "flat key = value configuration file");
    for (const auto& key : config_keys()) sub->add_option("--" + key.name, flags[key.name], key.help);
    subs.push_back(sub);
    return sub;
  };
  CLI::App* trace = add("trace", "one trajectory: CSV plus summary");
  CLI::App* sweep = add("sweep-phases", "Markovian steady states over a (phi1, phi3) grid");
  CLI::App* oracle = add("compare-oracle", "check the MPS engine against brute force or the master equation");
  CLI::App* conv = add("convergence", "bin-dimension and step-size convergence of one trace");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const CLI::App* sub : subs)
      if (sub->parsed())
        for (const auto& key : config_keys())
          if (sub->count("--" + key.name) > 0) set_config_value(cfg, key.name, flags[key.name]);

    if (trace->parsed()) return cmd_trace(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (oracle->parsed()) return cmd_compare(cfg);
    if (conv->parsed()) return cmd_convergence(cfg);
  } catch (const RunAborted& e) {
    std::cerr << "run aborted: " << e.what() << "\n";
    return kExitAborted;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAborted;
  }
  return kExitConfig;
}

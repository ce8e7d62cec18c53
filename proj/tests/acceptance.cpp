// Acceptance run: one PASS/FAIL line per criterion, details on the following
// indented lines. Exit status is non-zero if any criterion fails.

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "wgqed/config.hpp"
#include "wgqed/errors.hpp"
#include "wgqed/evolution.hpp"
#include "wgqed/oracle.hpp"

using namespace wgqed;

namespace {

constexpr double kPi = std::numbers::pi;

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  void note(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    notes.emplace_back(buf);
  }
  void require(bool ok, const char* fmt, auto... args) {
    if (!ok) pass = false;
    note(fmt, args...);
  }
};

int failures = 0;

void report(int id, const char* title, const Outcome& o, double seconds) {
  std::printf("criterion %d %s: %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", title, seconds);
  for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

// Criterion 7 is audited on every trajectory produced by the other criteria.
struct ConservationAudit {
  std::size_t runs = 0;
  std::size_t records = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();  // drift - (1e-6 + discarded)
  double worst_norm_excess = -std::numeric_limits<double>::infinity();  // (1 - norm) - discarded
  double max_discarded = 0.0;
  std::string worst_run;
  std::string worst_norm_run;
  std::size_t norm_violating_runs = 0;

  void audit(const std::string& name, const Trajectory& t, double initial_excitation) {
    ++runs;
    bool norm_violated = false;
    for (const auto& r : t.records) {
      ++records;
      const double excess = std::abs(r.total_excitation - initial_excitation) - (1e-6 + r.discarded_weight_cum);
      const double norm_excess = (1.0 - r.norm) - r.discarded_weight_cum;
      if (excess > worst_excess) {
        worst_excess = excess;
        worst_run = name;
      }
      if (norm_excess > worst_norm_excess) {
        worst_norm_excess = norm_excess;
        worst_norm_run = name;
      }
      norm_violated = norm_violated || norm_excess > 0.0;
      max_discarded = std::max(max_discarded, r.discarded_weight_cum);
    }
    if (norm_violated) ++norm_violating_runs;
  }
} conservation;

double excitation_of(const SystemState& s) {
  double n = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) n += std::norm(s[i]) * static_cast<double>(std::popcount(i));
  return n;
}

struct Traced {
  ResolvedRun resolved;
  RunResult result;
};

Traced trace(const std::string& name, const RunConfig& c) {
  Traced t{resolve(c), {}};
  t.result = run(t.resolved.params, t.resolved.options);
  conservation.audit(name, t.result.trajectory, excitation_of(t.resolved.params.initial_system));
  return t;
}

RunConfig markovian(const std::string& preset, double phi1, double phi3) {
  RunConfig c;
  c.preset = preset;
  c.dt = 0.02;
  c.t_end = 15.0;
  c.stop_at_steady = false;
  c.markovian_phases = std::array<double, kNumEmitters>{phi1, 0.0, phi3};
  return c;
}

double max_population_diff(const Trajectory& a, const Trajectory& b) {
  const std::size_t n = std::min(a.records.size(), b.records.size());
  double d = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t e = 0; e < kNumEmitters; ++e)
      d = std::max(d, std::abs(a.records[k].populations[e] - b.records[k].populations[e]));
  return d;
}

void criterion1() {
  Clock clock;
  Outcome o;
  const auto grid = linspace(0.0, 2.0 * kPi, 8);
  double worst_i = 0.0, worst_pop = 0.0;
  for (double p1 : grid)
    for (double p3 : grid) {
      const Traced t = trace("c1 sweep", markovian("triply", p1, p3));
      const double i = integrated_reservoir(t.result.trajectory, t.resolved.params);
      worst_i = std::max(worst_i, std::abs(i - 3.0));
      for (double p : t.result.trajectory.records.back().populations) worst_pop = std::max(worst_pop, p);
    }
  o.require(worst_i < 1e-3, "64 points, dt = 0.02, gamma t = 15: max |I - 3| = %.3e (bound 1e-3)", worst_i);
  o.require(worst_pop < 1e-3, "max final population %.3e (bound 1e-3)", worst_pop);
  o.note("sweep time %.1f s", clock.seconds());
  report(1, "Markovian triply excited state: phases do not matter", o, clock.seconds());
}

void criterion2() {
  Clock clock;
  Outcome o;
  for (auto [preset, target] : {std::pair{"single-sym", 1.0}, std::pair{"double-sym", 2.0}}) {
    const Traced free = trace("c2", markovian(preset, 2 * kPi, 2 * kPi));
    const double i_free = integrated_reservoir(free.result.trajectory, free.resolved.params);
    o.require(std::abs(i_free - target) < 1e-3, "%s at (2pi, 2pi): I = %.6f (target %.0f +- 1e-3)", preset, i_free,
              target);
    for (auto [p1, p3] : {std::pair{kPi, 0.0}, std::pair{0.0, kPi}, std::pair{kPi, kPi}}) {
      const Traced t = trace("c2", markovian(preset, p1, p3));
      const double i = integrated_reservoir(t.result.trajectory, t.resolved.params);
      o.require(i < target - 1e-3, "%s at (%.0fpi, %.0fpi): I = %.6f (must be < %.3f)", preset, p1 / kPi, p3 / kPi, i,
                target - 1e-3);
    }
  }
  report(2, "Markovian trapping unless both phases are multiples of 2pi", o, clock.seconds());
}

RunConfig symmetric_nm(std::size_t p) {
  RunConfig c;
  c.mode = Mode::NonMarkovian;
  c.tau1 = c.tau3 = 0.5;
  c.phi_tau1 = c.phi_tau3 = 4 * kPi;  // omega_0 tau / 2 = 2 pi
  c.dt = 0.05;
  c.p = p;
  c.t_end = 40.0;
  // pop1 - pop3 grows like the square root of the discarded weight; 1e-12 leaves it near 1e-9.
  c.cutoff = 1e-16;
  return c;
}

// Plateau values of the converged p = 3 run at dt = 0.05, kept as regression baselines.
constexpr double kBaselinePop1 = 0.103223;
constexpr double kBaselinePop2 = 0.096153;

struct NmRuns {
  Traced c3;
  std::vector<std::pair<std::string, Traced>> c4;
  std::vector<std::string> c4_passing;
};

void criterion3(NmRuns& runs) {
  Clock clock;
  Outcome o;
  runs.c3 = trace("c3", symmetric_nm(3));
  const auto& traj = runs.c3.result.trajectory;
  const auto& last = traj.records.back();
  const auto& v = runs.c3.result.verdict;
  o.require(v.reached, "steady state reached: %s at gamma t = %.2f (residual %.2e, window %lld steps)",
            v.reached ? "yes" : "no", last.t_gamma, v.residual,
            static_cast<long long>(default_steady_window(runs.c3.resolved.params)));
  o.require(std::min({last.populations[0], last.populations[1], last.populations[2]}) > 0.01,
            "steady populations %.6f %.6f %.6f (each must exceed 0.01)", last.populations[0], last.populations[1],
            last.populations[2]);
  double asym = 0.0;
  for (const auto& r : traj.records) asym = std::max(asym, std::abs(r.populations[0] - r.populations[2]));
  o.require(asym < 1e-9, "max |pop1 - pop3| over %zu steps = %.2e (bound 1e-9)", traj.records.size(), asym);
  const double drift = std::max(std::abs(last.populations[0] - kBaselinePop1), std::abs(last.populations[1] - kBaselinePop2));
  o.require(drift < 1e-5, "baseline plateau (%.6f, %.6f): deviation %.2e", kBaselinePop1, kBaselinePop2, drift);
  o.note("dt %.4f, m1 = m3 = %lld, max bond %zu, discarded %.2e", runs.c3.resolved.params.dt,
         static_cast<long long>(runs.c3.resolved.params.m1), last.max_bond, last.discarded_weight_cum);
  report(3, "non-Markovian symmetric trapping", o, clock.seconds());
}

RunConfig asymmetric_nm(std::size_t p, double loop_phase) {
  RunConfig c;
  c.mode = Mode::NonMarkovian;
  c.tau1 = 1.0;
  c.tau3 = 0.5;
  c.loop_phase = loop_phase;
  c.p = p;
  c.t_end = 15.0;
  c.stop_at_steady = false;
  return c;
}

// Interpretations of the 3 pi loop phase with tau1 = 2 tau3.
const std::vector<std::pair<std::string, double>> kInterpretations = {
    {"omega_0 (tau1 + tau3) = 3 pi", 1.5 * kPi},
    {"omega_0 tau = 3 pi", 3.0 * kPi},
};

void criterion4(NmRuns& runs) {
  Clock clock;
  Outcome o;
  for (const auto& [name, phase] : kInterpretations) {
    Traced t = trace("c4 " + name, asymmetric_nm(3, phase));
    const auto& last = t.result.trajectory.records.back();
    const bool ok = last.populations[2] < 0.01 && last.populations[0] > 0.02 && last.populations[1] > 0.02;
    o.note("%s (phi_tau1 = %.2fpi, phi_tau3 = %.2fpi): pops at gamma t = %.1f: %.6f %.6f %.6f -> %s", name.c_str(),
           t.resolved.params.phi_tau1 / kPi, t.resolved.params.phi_tau3 / kPi, last.t_gamma, last.populations[0],
           last.populations[1], last.populations[2], ok ? "emitter 3 decays, 1 and 2 trapped" : "pattern absent");
    if (ok) runs.c4_passing.push_back(name);
    runs.c4.emplace_back(name, std::move(t));
  }
  o.require(!runs.c4_passing.empty(), "interpretations reproducing the anomalous trapping: %zu", runs.c4_passing.size());
  report(4, "non-Markovian asymmetric anomalous trapping", o, clock.seconds());
}

void criterion5() {
  Clock clock;
  Outcome o;
  for (Mode mode : {Mode::Markovian, Mode::NonMarkovian}) {
    ModelParams p;
    p.mode = mode;
    p.dt = 0.1;
    p.initial_system[0] = 0.0;
    p.initial_system[7] = 1.0;
    if (mode == Mode::NonMarkovian) {
      p.m1 = p.m3 = 1;
      p.phi_tau1 = 0.7;
      p.phi_tau3 = 1.3;
    } else {
      p.markovian_phases = std::array<double, kNumEmitters>{0.3, 0.0, 1.1};
    }
    RunOptions opt;
    opt.max_steps = 6;
    opt.stop_at_steady = false;
    opt.truncation = {std::numeric_limits<std::size_t>::max(), 0.0};
    const RunResult r = run(p, opt);
    conservation.audit("c5", r.trajectory, 3.0);
    const BruteForceResult bf = brute_force_run(p, 6);
    PopulationSeries ref;
    for (const auto& rec : bf.records) {
      ref.times.push_back(static_cast<double>(rec.step) * p.dt);
      ref.populations.push_back(rec.populations);
    }
    const auto rep = compare(population_series(r.trajectory), ref, 1e-10);
    o.require(rep.pass, "%s, 6 steps, p = 3, unbounded bond: max diff %.2e over %zu steps (bound 1e-10)",
              to_string(mode).c_str(), rep.max_diff, rep.points);
  }
  report(5, "MPS equals brute-force evolution", o, clock.seconds());
}

void criterion6() {
  Clock clock;
  Outcome o;
  ModelParams p;
  p.initial_system[0] = 0.0;
  p.initial_system[7] = 1.0;
  p.markovian_phases = std::array<double, kNumEmitters>{kPi / 2, 0.0, 1.3};
  const double t_end = 5.0;
  const LindbladResult lr = lindblad_run(p, t_end, 1e-4);
  o.note("master equation: dt_ode 1e-4, trace drift %.1e, min eigenvalue %.1e", lr.max_trace_drift, lr.min_eigenvalue);
  const double c = 2.0;
  std::vector<double> dts{0.02, 0.01, 0.005};
  std::vector<double> errs;
  for (double dt : dts) {
    p.dt = dt;
    RunOptions opt;
    opt.max_steps = steps_for(t_end, dt);
    opt.stop_at_steady = false;
    const RunResult r = run(p, opt);
    conservation.audit("c6", r.trajectory, 3.0);
    const double err = compare(population_series(r.trajectory), lr.series, 1.0, true).max_diff;
    errs.push_back(err);
    o.require(err < c * dt, "dt = %.3f: max |MPS - master equation| = %.3e (bound %.0f dt = %.3e)", dt, err, c, c * dt);
  }
  for (std::size_t k = 0; k + 1 < errs.size(); ++k) {
    const double order = std::log2(errs[k] / errs[k + 1]);
    o.require(std::abs(order - 1.0) <= 0.2, "observed order dt = %.3f -> %.3f: %.3f (1 +- 0.2)", dts[k], dts[k + 1], order);
  }
  report(6, "Markovian limit converges to the master equation", o, clock.seconds());
}

void criterion8(const NmRuns& runs) {
  Clock clock;
  Outcome o;
  {
    RunConfig c = symmetric_nm(4);
    c.cutoff = RunConfig{}.cutoff;  // 1e-3 bound does not need the symmetry-grade cutoff
    c.t_end.reset();
    c.max_steps = runs.c3.result.trajectory.steps_taken;
    c.stop_at_steady = false;
    const Traced t = trace("c8 symmetric p=4", c);
    const double d = max_population_diff(runs.c3.result.trajectory, t.result.trajectory);
    o.require(d <= 1e-3, "criterion 3 run, p = 3 vs 4 over %lld steps: max diff %.2e (bound 1e-3)",
              static_cast<long long>(c.max_steps.value()), d);
  }
  for (const auto& [name, p3] : runs.c4) {
    const bool relevant = runs.c4_passing.empty() ||
                          std::find(runs.c4_passing.begin(), runs.c4_passing.end(), name) != runs.c4_passing.end();
    if (!relevant) continue;
    const double phase = std::find_if(kInterpretations.begin(), kInterpretations.end(),
                                      [&](const auto& x) { return x.first == name; })->second;
    const Traced t = trace("c8 " + name + " p=4", asymmetric_nm(4, phase));
    const double d = max_population_diff(p3.result.trajectory, t.result.trajectory);
    o.require(d <= 1e-3, "criterion 4 run (%s), p = 3 vs 4: max diff %.2e (bound 1e-3)", name.c_str(), d);
  }
  report(8, "bin dimension convergence", o, clock.seconds());
}

struct Peak {
  double t;
  double height;
  double amplitude;  // height above the preceding minimum
};

// Local maxima of a sampled trace after t_min; amplitude is measured from the lowest point since the previous maximum.
std::vector<Peak> peaks_after(const std::vector<double>& t, const std::vector<double>& v, double t_min) {
  std::vector<Peak> out;
  double trough = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k + 1 < v.size(); ++k) {
    if (t[k] <= t_min) continue;
    trough = std::min(trough, v[k]);
    if (v[k] > v[k - 1] && v[k] >= v[k + 1]) {
      out.push_back({t[k], v[k], v[k] - trough});
      trough = v[k];
    }
  }
  return out;
}

std::string describe(const std::vector<Peak>& peaks) {
  std::string list;
  for (const auto& p : peaks) {
    char buf[80];
    std::snprintf(buf, sizeof buf, " (t %.2f, height %.4f, amplitude %.4f)", p.t, p.height, p.amplitude);
    list += buf;
  }
  return list.empty() ? " none" : list;
}

bool decreasing_amplitudes(const std::vector<Peak>& peaks) {
  for (std::size_t k = 1; k < peaks.size(); ++k)
    if (peaks[k].amplitude >= peaks[k - 1].amplitude) return false;
  return peaks.size() >= 3;
}

void criterion9() {
  Clock clock;
  Outcome o;
  RunConfig c;
  c.mode = Mode::NonMarkovian;
  c.tau1 = c.tau3 = 6.25;
  c.phi_tau1 = c.phi_tau3 = 4 * kPi;
  // dt 0.05 needs ~126 bins per delay line and does not finish in reasonable time on one core.
  c.dt = 0.125;
  c.t_end = 20.0;
  c.cutoff = 1e-9;  // 1e-8 discards enough that excitation drift exceeds 1e-6 + discarded
  c.swap_cutoff = 1e-11;
  c.discard_budget = 1e-4;
  const Traced t = trace("c9", c);
  const auto& traj = t.result.trajectory;
  o.note("dt %.4f, m1 = m3 = %lld, max bond %zu, discarded %.2e", t.resolved.params.dt,
         static_cast<long long>(t.resolved.params.m1), traj.records.back().max_bond,
         traj.records.back().discarded_weight_cum);
  const double tau = 6.25;
  std::vector<double> times, total;
  std::array<std::vector<double>, kNumEmitters> pops;
  for (const auto& r : traj.records) {
    times.push_back(r.t_gamma);
    double s = 0.0;
    for (std::size_t e = 0; e < kNumEmitters; ++e) {
      pops[e].push_back(r.populations[e]);
      s += r.populations[e];
    }
    total.push_back(s);
  }
  const auto total_peaks = peaks_after(times, total, tau);
  o.require(decreasing_amplitudes(total_peaks), "total emitter population, maxima after t > tau:%s",
            describe(total_peaks).c_str());
  for (std::size_t e = 0; e < 2; ++e) {
    const auto peaks = peaks_after(times, pops[e], tau);
    o.note("pop%zu maxima after t > tau (%s):%s", e + 1,
           decreasing_amplitudes(peaks) ? ">= 3, decreasing" : "fewer than 3 or not decreasing", describe(peaks).c_str());
  }
  o.require(!t.result.verdict.reached, "steady state by gamma t = 20: %s (residual %.2e)",
            t.result.verdict.reached ? "yes" : "no", t.result.verdict.residual);
  report(9, "long-delay oscillations", o, clock.seconds());
}

void criterion7() {
  Outcome o;
  o.require(conservation.worst_excess <= 0.0,
            "%zu runs, %zu records: worst |excitation drift| - (1e-6 + discarded) = %.2e (%s)", conservation.runs,
            conservation.records, conservation.worst_excess, conservation.worst_run.c_str());
  o.require(conservation.worst_norm_excess <= 0.0, "worst (1 - norm) - discarded = %.2e (%s); %zu of %zu runs above 0",
            conservation.worst_norm_excess, conservation.worst_norm_run.c_str(), conservation.norm_violating_runs,
            conservation.runs);
  o.note("largest cumulative discarded weight %.2e", conservation.max_discarded);
  report(7, "excitation and norm conservation", o, 0.0);
}

}  // namespace

int main() {
  Clock total;
  try {
    NmRuns runs;
    criterion1();
    criterion2();
    criterion3(runs);
    criterion4(runs);
    criterion5();
    criterion6();
    criterion8(runs);
    criterion9();
    criterion7();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("total %.1f s, %d criteria failed\n", total.seconds(), failures);
  return failures == 0 ? 0 : 1;
}

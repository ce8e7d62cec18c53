#include "wgqed/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <regex>
#include <sstream>

#include "wgqed/errors.hpp"

namespace wgqed {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double plain_number(const std::string& text, const std::string& key) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (!text.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) throw ArgumentError("key '" + key + "': '" + text + "' is not a number");
  return v;
}

// Reals may be written as multiples of pi: "pi", "3pi", "3*pi", "-pi/2", "0.5*pi/4".
double parse_real(const std::string& raw, const std::string& key) {
  const std::string text = lower(trim(raw));
  static const std::regex pi_form(R"(^([+-]?[0-9]*\.?[0-9]*(?:e[+-]?[0-9]+)?)\*?pi(?:/([0-9]*\.?[0-9]+))?$)");
  std::smatch m;
  double v = 0.0;
  if (std::regex_match(text, m, pi_form)) {
    const std::string coef = m[1].str();
    double c = 1.0;
    if (coef == "-")
      c = -1.0;
    else if (!coef.empty() && coef != "+")
      c = plain_number(coef, key);
    v = c * std::numbers::pi;
    if (m[2].matched) v /= plain_number(m[2].str(), key);
  } else {
    v = plain_number(text, key);
  }
  if (!std::isfinite(v)) throw ArgumentError("key '" + key + "': value must be finite");
  return v;
}

std::int64_t parse_int(const std::string& raw, const std::string& key) {
  const std::string text = trim(raw);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ArgumentError("key '" + key + "': '" + text + "' is not an integer");
  return v;
}

std::size_t parse_count(const std::string& raw, const std::string& key) {
  const std::int64_t v = parse_int(raw, key);
  if (v < 0) throw ArgumentError("key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& raw, const std::string& key) {
  const std::string t = lower(trim(raw));
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw ArgumentError("key '" + key + "': '" + raw + "' is not a boolean");
}

std::vector<double> parse_reals(const std::string& raw, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(raw)) out.push_back(parse_real(item, key));
  return out;
}

std::array<double, kNumEmitters> parse_triple(const std::string& raw, const std::string& key) {
  const auto v = parse_reals(raw, key);
  if (v.size() != kNumEmitters) throw ArgumentError("key '" + key + "' needs 3 comma-separated values");
  return {v[0], v[1], v[2]};
}

void set_rate(RunConfig& c, std::size_t e, const std::string& v, const std::string& key) {
  const double g = parse_real(v, key);
  if (g < 0.0) throw ArgumentError("key '" + key + "' must be >= 0");
  c.gamma[e] = g;
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  auto add = [&](std::string name, std::string help, std::function<void(RunConfig&, const std::string&)> set) {
    k.push_back({std::move(name), std::move(help), std::move(set)});
  };
  add("gamma", "decay rate into each channel: one value for all emitters or three", [](RunConfig& c, const std::string& v) {
    const auto items = split_list(v);
    if (items.size() != 1 && items.size() != kNumEmitters) throw ArgumentError("key 'gamma' needs 1 or 3 values");
    for (std::size_t e = 0; e < kNumEmitters; ++e) set_rate(c, e, items[items.size() == 1 ? 0 : e], "gamma");
  });
  add("gamma1", "decay rate of emitter 1", [](RunConfig& c, const std::string& v) { set_rate(c, 0, v, "gamma1"); });
  add("gamma2", "decay rate of emitter 2", [](RunConfig& c, const std::string& v) { set_rate(c, 1, v, "gamma2"); });
  add("gamma3", "decay rate of emitter 3", [](RunConfig& c, const std::string& v) { set_rate(c, 2, v, "gamma3"); });
  add("delta1", "detuning of emitter 1", [](RunConfig& c, const std::string& v) { c.delta1 = parse_real(v, "delta1"); });
  add("delta3", "detuning of emitter 3", [](RunConfig& c, const std::string& v) { c.delta3 = parse_real(v, "delta3"); });
  add("tau1", "round trip time between emitters 1 and 2", [](RunConfig& c, const std::string& v) {
    c.tau1 = parse_real(v, "tau1");
    if (c.tau1 < 0.0) throw ArgumentError("tau1 must be >= 0");
  });
  add("tau3", "round trip time between emitters 2 and 3", [](RunConfig& c, const std::string& v) {
    c.tau3 = parse_real(v, "tau3");
    if (c.tau3 < 0.0) throw ArgumentError("tau3 must be >= 0");
  });
  add("dt", "time step (lowered so half-delays are whole steps)", [](RunConfig& c, const std::string& v) {
    c.dt = parse_real(v, "dt");
    if (!(*c.dt > 0.0)) throw ArgumentError("dt must be > 0");
  });
  add("phi_tau1", "omega_0 * tau1", [](RunConfig& c, const std::string& v) { c.phi_tau1 = parse_real(v, "phi_tau1"); });
  add("phi_tau3", "omega_0 * tau3", [](RunConfig& c, const std::string& v) { c.phi_tau3 = parse_real(v, "phi_tau3"); });
  add("loop_phase", "omega_0 * tau with tau = (tau1 + tau3) / 2", [](RunConfig& c, const std::string& v) {
    c.loop_phase = parse_real(v, "loop_phase");
  });
  add("p", "levels per time bin", [](RunConfig& c, const std::string& v) {
    c.p = parse_count(v, "p");
    if (c.p < 2) throw ArgumentError("p must be >= 2");
  });
  add("mode", "markovian or non-markovian", [](RunConfig& c, const std::string& v) {
    const std::string t = lower(trim(v));
    if (t == "markovian" || t == "m")
      c.mode = Mode::Markovian;
    else if (t == "non-markovian" || t == "nonmarkovian" || t == "nm")
      c.mode = Mode::NonMarkovian;
    else
      throw ArgumentError("mode must be markovian or non-markovian, got '" + v + "'");
  });
  add("preset", "initial state: vacuum, triply, single-sym, double-sym", [](RunConfig& c, const std::string& v) {
    c.preset = trim(v);
    (void)preset_state(c.preset);
  });
  add("amplitudes", "8 real or 16 interleaved re,im amplitudes (normalized on load)",
      [](RunConfig& c, const std::string& v) {
        const auto x = parse_reals(v, "amplitudes");
        SystemState s{};
        if (x.size() == kSystemDim) {
          for (std::size_t i = 0; i < kSystemDim; ++i) s[i] = x[i];
        } else if (x.size() == 2 * kSystemDim) {
          for (std::size_t i = 0; i < kSystemDim; ++i) s[i] = cplx(x[2 * i], x[2 * i + 1]);
        } else {
          throw ArgumentError("amplitudes needs 8 or 16 values");
        }
        double n2 = 0.0;
        for (const auto& a : s) n2 += std::norm(a);
        if (!(n2 > 0.0)) throw ArgumentError("amplitudes must not all vanish");
        for (auto& a : s) a /= std::sqrt(n2);
        c.amplitudes = s;
      });
  add("markovian_phases", "phi1,phi2,phi3 used for both channels (Markovian mode)",
      [](RunConfig& c, const std::string& v) { c.markovian_phases = parse_triple(v, "markovian_phases"); });
  add("trotter", "first or second (only matters without slot fusion)", [](RunConfig& c, const std::string& v) {
    const std::string t = lower(trim(v));
    if (t == "first" || t == "1")
      c.trotter = TrotterOrder::First;
    else if (t == "second" || t == "2" || t == "symmetric")
      c.trotter = TrotterOrder::SecondSymmetric;
    else
      throw ArgumentError("trotter must be first or second");
  });
  add("fuse", "merge sub-gates sharing a bin into one exact gate", [](RunConfig& c, const std::string& v) {
    c.fuse = parse_bool(v, "fuse");
  });
  add("max_steps", "number of steps", [](RunConfig& c, const std::string& v) {
    c.max_steps = parse_int(v, "max_steps");
    if (*c.max_steps < 1) throw ArgumentError("max_steps must be >= 1");
  });
  add("t_end", "duration in units of 1/gamma (alternative to max_steps)", [](RunConfig& c, const std::string& v) {
    c.t_end = parse_real(v, "t_end");
    if (!(*c.t_end > 0.0)) throw ArgumentError("t_end must be > 0");
  });
  add("record_every", "record observables every n steps", [](RunConfig& c, const std::string& v) {
    c.record_every = parse_int(v, "record_every");
    if (c.record_every < 1) throw ArgumentError("record_every must be >= 1");
  });
  add("steady_tol", "steady-state tolerance", [](RunConfig& c, const std::string& v) {
    c.steady_tol = parse_real(v, "steady_tol");
    if (!(c.steady_tol > 0.0)) throw ArgumentError("steady_tol must be > 0");
  });
  add("steady_window", "steady-state window in steps (0: automatic)", [](RunConfig& c, const std::string& v) {
    c.steady_window = parse_int(v, "steady_window");
    if (c.steady_window < 0) throw ArgumentError("steady_window must be >= 0");
  });
  add("stop_at_steady", "stop once the steady state is detected", [](RunConfig& c, const std::string& v) {
    c.stop_at_steady = parse_bool(v, "stop_at_steady");
  });
  add("max_bond", "bond dimension cap for gate splits", [](RunConfig& c, const std::string& v) {
    c.max_bond = parse_count(v, "max_bond");
    if (c.max_bond < 1) throw ArgumentError("max_bond must be >= 1");
  });
  add("cutoff", "relative squared Schmidt weight dropped after gates", [](RunConfig& c, const std::string& v) {
    c.cutoff = parse_real(v, "cutoff");
    if (c.cutoff < 0.0) throw ArgumentError("cutoff must be >= 0");
  });
  add("swap_cutoff", "relative squared Schmidt weight dropped by swaps", [](RunConfig& c, const std::string& v) {
    c.swap_cutoff = parse_real(v, "swap_cutoff");
    if (c.swap_cutoff < 0.0) throw ArgumentError("swap_cutoff must be >= 0");
  });
  add("discard_budget", "cumulative discarded weight that aborts the run", [](RunConfig& c, const std::string& v) {
    c.discard_budget = parse_real(v, "discard_budget");
    if (!(c.discard_budget > 0.0)) throw ArgumentError("discard_budget must be > 0");
  });
  add("output", "CSV output path", [](RunConfig& c, const std::string& v) { c.output = trim(v); });
  add("bins_output", "finalized-bin CSV path (empty: none)", [](RunConfig& c, const std::string& v) {
    c.bins_output = trim(v);
  });
  add("checkpoint", "binary MPS checkpoint written at the end of a trace", [](RunConfig& c, const std::string& v) {
    c.checkpoint = trim(v);
  });
  add("sweep_phi1_points", "grid points for phi1 on [0, 2pi]", [](RunConfig& c, const std::string& v) {
    c.sweep_phi1_points = parse_count(v, "sweep_phi1_points");
    if (c.sweep_phi1_points < 2) throw ArgumentError("sweep_phi1_points must be >= 2");
  });
  add("sweep_phi3_points", "grid points for phi3 on [0, 2pi]", [](RunConfig& c, const std::string& v) {
    c.sweep_phi3_points = parse_count(v, "sweep_phi3_points");
    if (c.sweep_phi3_points < 2) throw ArgumentError("sweep_phi3_points must be >= 2");
  });
  add("presets", "comma-separated presets for sweep-phases", [](RunConfig& c, const std::string& v) {
    c.presets = split_list(v);
    for (const auto& p : c.presets) (void)preset_state(p);
  });
  add("oracle", "brute-force or lindblad", [](RunConfig& c, const std::string& v) {
    const std::string t = lower(trim(v));
    if (t != "brute-force" && t != "lindblad") throw ArgumentError("oracle must be brute-force or lindblad");
    c.oracle = t;
  });
  add("oracle_steps", "steps for the brute-force comparison", [](RunConfig& c, const std::string& v) {
    c.oracle_steps = parse_int(v, "oracle_steps");
    if (c.oracle_steps < 1) throw ArgumentError("oracle_steps must be >= 1");
  });
  add("tolerance", "pass threshold for compare-oracle", [](RunConfig& c, const std::string& v) {
    c.tolerance = parse_real(v, "tolerance");
    if (!(*c.tolerance > 0.0)) throw ArgumentError("tolerance must be > 0");
  });
  add("dt_ode", "master-equation integrator step", [](RunConfig& c, const std::string& v) {
    c.dt_ode = parse_real(v, "dt_ode");
    if (!(c.dt_ode > 0.0)) throw ArgumentError("dt_ode must be > 0");
  });
  add("seed", "reserved (runs are deterministic)", [](RunConfig& c, const std::string& v) {
    c.seed = static_cast<std::uint64_t>(parse_count(v, "seed"));
  });
  add("threads", "sweep worker threads (0: all cores)", [](RunConfig& c, const std::string& v) {
    c.threads = parse_count(v, "threads");
  });
  return k;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys())
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  throw ArgumentError("unknown configuration key '" + key + "'");
}

void apply_config_text(RunConfig& config, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string line(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const ArgumentError& e) {
      throw ArgumentError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str());
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"vacuum", "triply", "single-sym", "double-sym"};
  return names;
}

SystemState preset_state(const std::string& name) {
  SystemState s{};
  const double third = 1.0 / std::sqrt(3.0);
  if (name == "vacuum") {
    s[0] = 1.0;
  } else if (name == "triply") {
    s[7] = 1.0;
  } else if (name == "single-sym") {
    s[1] = s[2] = s[4] = third;
  } else if (name == "double-sym") {
    s[3] = s[5] = s[6] = third;
  } else {
    throw ArgumentError("unknown preset '" + name + "' (vacuum, triply, single-sym, double-sym)");
  }
  return s;
}

std::int64_t steps_for(double duration, double dt) {
  const double n = duration / dt;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(n)));
}

namespace {

// Smallest m >= ceil(half / dt) whose step half / m divides `other` as well.
double commensurate_step(double half, double other, double dt_requested) {
  const auto start = static_cast<std::int64_t>(std::ceil(half / dt_requested - 1e-9));
  for (std::int64_t m = std::max<std::int64_t>(start, 1); m < start + 1000000; ++m) {
    const double dt = half / static_cast<double>(m);
    if (other == 0.0) return dt;
    const double k = other / dt;
    if (std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k) && std::round(k) >= 1.0) return dt;
  }
  throw ArgumentError("tau1 and tau3 have no common step near dt; choose commensurate delays");
}

}  // namespace

ResolvedRun resolve(const RunConfig& c) {
  ResolvedRun r;
  ModelParams& p = r.params;
  p.gamma = c.gamma;
  p.delta1 = c.delta1;
  p.delta3 = c.delta3;
  p.bin_dim = c.p;
  p.mode = c.mode;
  p.trotter = c.trotter;
  p.fuse_shared_slots = c.fuse;
  p.initial_system = c.amplitudes ? *c.amplitudes : preset_state(c.preset);
  const double unit = p.gamma_unit();

  if (c.loop_phase && (c.phi_tau1 || c.phi_tau3))
    throw ArgumentError("give loop_phase or phi_tau1/phi_tau3, not both");
  if (c.loop_phase) {
    const double tau = 0.5 * (c.tau1 + c.tau3);
    if (!(tau > 0.0)) throw ArgumentError("loop_phase needs tau1 + tau3 > 0");
    p.phi_tau1 = *c.loop_phase * c.tau1 / tau;
    p.phi_tau3 = *c.loop_phase * c.tau3 / tau;
  } else {
    p.phi_tau1 = c.phi_tau1.value_or(0.0);
    p.phi_tau3 = c.phi_tau3.value_or(0.0);
  }

  if (c.mode == Mode::NonMarkovian) {
    if (c.markovian_phases) throw ArgumentError("markovian_phases applies to Markovian mode only");
    const double h1 = 0.5 * c.tau1;
    const double h3 = 0.5 * c.tau3;
    if (!(h1 > 0.0) && !(h3 > 0.0)) throw ArgumentError("non-Markovian mode needs tau1 or tau3 > 0");
    double shortest = std::numeric_limits<double>::infinity();
    if (h1 > 0.0) shortest = std::min(shortest, h1);
    if (h3 > 0.0) shortest = std::min(shortest, h3);
    r.dt_requested = c.dt.value_or(std::min(0.05 / unit, shortest / 4.0));
    p.dt = h3 > 0.0 ? commensurate_step(h3, h1, r.dt_requested) : commensurate_step(h1, 0.0, r.dt_requested);
    p.m1 = static_cast<std::int64_t>(std::llround(h1 / p.dt));
    p.m3 = static_cast<std::int64_t>(std::llround(h3 / p.dt));
  } else {
    p.markovian_phases = c.markovian_phases;
    r.dt_requested = c.dt.value_or(0.05 / unit);
    p.dt = r.dt_requested;
  }
  r.dt_adjusted = std::abs(p.dt - r.dt_requested) > 1e-12 * r.dt_requested;
  validate(p);

  RunOptions& o = r.options;
  if (c.max_steps && c.t_end) throw ArgumentError("give max_steps or t_end, not both");
  o.max_steps = c.max_steps ? *c.max_steps : c.t_end ? steps_for(*c.t_end, p.dt) : 1000;
  o.record_every = c.record_every;
  o.steady_tol = c.steady_tol;
  o.steady_window = c.steady_window;
  o.stop_at_steady = c.stop_at_steady;
  o.truncation = {c.max_bond, c.cutoff};
  o.swap.cutoff = c.swap_cutoff;
  o.discard_budget = c.discard_budget;
  return r;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "step,t_gamma,pop1,pop2,pop3,norm,total_excitation,discarded_weight_cum,max_bond\n";
  char buf[512];
  for (const auto& r : trajectory.records) {
    std::snprintf(buf, sizeof buf, "%lld,%.10g,%.15g,%.15g,%.15g,%.15g,%.15g,%.6e,%zu\n",
                  static_cast<long long>(r.step), r.t_gamma, r.populations[0], r.populations[1], r.populations[2],
                  r.norm, r.total_excitation, r.discarded_weight_cum, r.max_bond);
    out << buf;
  }
}

void write_bins_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "bin_index,channel,occupation\n";
  char buf[128];
  for (const auto& b : trajectory.finalized_bins) {
    std::snprintf(buf, sizeof buf, "%lld,%s,%.15g\n", static_cast<long long>(b.bin_index),
                  b.channel == Channel::Right ? "R" : "L", b.occupation);
    out << buf;
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "phi1,phi3,I,pop1_ss,pop2_ss,pop3_ss\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.15g,%.15g,%.15g,%.15g,%.15g,%.15g\n", r.phi1, r.phi3, r.integrated,
                  r.populations[0], r.populations[1], r.populations[2]);
    out << buf;
  }
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash) || dot == 0 ||
      (slash != std::string::npos && dot == slash + 1))
    return path + "_" + suffix;
  return path.substr(0, dot) + "_" + suffix + path.substr(dot);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2) throw ArgumentError("linspace needs at least 2 points");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

}  // namespace wgqed

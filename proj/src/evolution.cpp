#include "wgqed/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "wgqed/errors.hpp"

namespace wgqed {

namespace {

// Reorders the tensor factors of `op`: chain position k carries factor order[k].
Matrix permute_operator(const Matrix& op, const std::vector<std::size_t>& dims,
                        const std::vector<std::size_t>& order) {
  const std::size_t n = dims.size();
  bool identity_order = true;
  for (std::size_t k = 0; k < n; ++k) identity_order = identity_order && order[k] == k;
  if (identity_order) return op;
  Shape shape(2 * n);
  for (std::size_t k = 0; k < n; ++k) shape[k] = shape[n + k] = dims[k];
  const ComplexTensor t = ComplexTensor::from_matrix(op).reshaped(shape);
  std::vector<std::size_t> perm(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    perm[k] = order[k];
    perm[n + k] = n + order[k];
  }
  const ComplexTensor p = permute(t, perm);
  return p.reshaped({static_cast<std::size_t>(op.rows()), static_cast<std::size_t>(op.cols())}).to_matrix();
}

struct SwapRecord {
  std::size_t left_position;
  bool moved_right;  // the relocated bin went from left_position to left_position + 1
};

SiteLabel slot_label(const BinSlot& slot, std::int64_t step) {
  return SiteLabel::bin(slot.channel, step - slot.offset);
}

// Gathers the gate's bins around the system site, applies it, and undoes the
// gathering swaps. The center is left wherever the last undo swap put it.
double apply_sub_gate(TimeBinMPS& mps, const SubGate& gate, std::int64_t step, Truncation truncation,
                      SwapOptions swap, std::size_t& max_bond) {
  double discarded = 0.0;
  std::vector<SwapRecord> swaps;

  struct Wanted {
    std::size_t factor;  // 1-based factor index in the gate (0 is the system)
    SiteLabel label;
  };
  std::vector<Wanted> left_side;
  std::vector<Wanted> right_side;
  const std::size_t s0 = mps.system_position();
  for (std::size_t k = 0; k < gate.slots.size(); ++k) {
    const SiteLabel label = slot_label(gate.slots[k], step);
    const auto pos = mps.position_of(label);
    if (!pos)
      throw ProtocolError("bin " + to_string(label) + " required at step " + std::to_string(step) +
                          " is not in the chain");
    (*pos < s0 ? left_side : right_side).push_back({k + 1, label});
  }
  // Closest first, so bins further out never shift while one is in transit.
  auto position = [&](const Wanted& w) { return *mps.position_of(w.label); };
  std::sort(left_side.begin(), left_side.end(),
            [&](const Wanted& a, const Wanted& b) { return position(a) > position(b); });
  std::sort(right_side.begin(), right_side.end(),
            [&](const Wanted& a, const Wanted& b) { return position(a) < position(b); });

  const std::size_t s = s0;
  for (std::size_t k = 0; k < left_side.size(); ++k) {
    const std::size_t target = s - 1 - k;
    const std::size_t p = position(left_side[k]);
    if (p == target) continue;
    mps.move_center(p);
    for (std::size_t q = p; q < target; ++q) {
      discarded += mps.swap_adjacent(q, swap);
      swaps.push_back({q, true});
    }
  }
  for (std::size_t k = 0; k < right_side.size(); ++k) {
    const std::size_t target = s + 1 + k;
    const std::size_t p = position(right_side[k]);
    if (p == target) continue;
    mps.move_center(p);
    for (std::size_t q = p; q > target; --q) {
      discarded += mps.swap_adjacent(q - 1, swap);
      swaps.push_back({q - 1, false});
    }
  }

  const std::size_t first = s - left_side.size();
  const std::size_t count = 1 + left_side.size() + right_side.size();
  std::vector<std::size_t> order(count);
  for (std::size_t k = 0; k < left_side.size(); ++k) order[left_side.size() - 1 - k] = left_side[k].factor;
  order[left_side.size()] = 0;
  for (std::size_t k = 0; k < right_side.size(); ++k) order[left_side.size() + 1 + k] = right_side[k].factor;
  // Factor dims in the gate's own order.
  std::vector<std::size_t> gate_dims(count, mps.bin_dim());
  gate_dims[0] = kSystemDim;

  if (mps.center() < first || mps.center() >= first + count) mps.move_center(s);
  const Matrix local = permute_operator(gate.unitary, gate_dims, order);
  // Leave the center where the first undo swap needs it.
  std::size_t center_end = s;
  if (!swaps.empty()) {
    const auto& last = swaps.back();
    const std::size_t moved_to = last.moved_right ? last.left_position + 1 : last.left_position;
    if (moved_to >= first && moved_to < first + count) center_end = moved_to;
  }
  const auto report = mps.apply_gate(first, count, local, truncation, center_end);
  discarded += report.discarded_weight;
  max_bond = std::max(max_bond, report.max_bond_after);

  for (auto it = swaps.rbegin(); it != swaps.rend(); ++it) {
    const std::size_t moved_to = it->moved_right ? it->left_position + 1 : it->left_position;
    mps.move_center(moved_to);
    discarded += mps.swap_adjacent(it->left_position, swap);
  }
  return discarded;
}

std::int64_t reach(const SubGate& gate) {
  std::int64_t r = 0;
  for (const auto& slot : gate.slots) r = std::max(r, slot.offset);
  return r;
}

GateApplicationReport advance_step(TimeBinMPS& mps, const StepGateSet& gates, std::int64_t step,
                                   Truncation truncation, SwapOptions swap) {
  mps.append_vacuum_bin(SiteLabel::bin(Channel::Left, step));
  mps.append_vacuum_bin(SiteLabel::bin(Channel::Right, step));

  GateApplicationReport report;
  if (gates.exact) {
    // Commuting gates: deepest first, so the center sweeps out once and back.
    std::vector<const SubGate*> order;
    for (const auto& gate : gates.sub_gates) order.push_back(&gate);
    std::stable_sort(order.begin(), order.end(),
                     [](const SubGate* a, const SubGate* b) { return reach(*a) > reach(*b); });
    for (const SubGate* gate : order)
      report.discarded_weight += apply_sub_gate(mps, *gate, step, truncation, swap, report.max_bond_after);
  } else {
    for (const auto& gate : gates.sub_gates)
      report.discarded_weight += apply_sub_gate(mps, gate, step, truncation, swap, report.max_bond_after);
  }

  // Canonical order: the system site follows the newest bins.
  std::size_t s = mps.system_position();
  mps.move_center(s);
  while (s + 1 < mps.size()) {
    report.discarded_weight += mps.swap_adjacent(s, swap);
    ++s;
  }
  report.max_bond_after = std::max(report.max_bond_after, mps.max_bond());
  return report;
}

}  // namespace

std::int64_t default_steady_window(const ModelParams& params) {
  const auto one_decay = static_cast<std::int64_t>(std::ceil(1.0 / (params.gamma_unit() * params.dt)));
  return std::max<std::int64_t>({3 * params.loop_steps(), one_decay, 1});
}

std::int64_t finalization_horizon(const ModelParams& params, std::int64_t steps_done) {
  return steps_done - 2 * params.loop_steps();
}

TimeBinMPS initial_state(const ModelParams& params) {
  return TimeBinMPS::init_vacuum(params.loop_steps(), params.bin_dim, params.initial_system);
}

GateApplicationReport step_markovian(TimeBinMPS& mps, const StepGateSet& gates, std::int64_t step,
                                     Truncation truncation, SwapOptions swap) {
  for (const auto& g : gates.sub_gates)
    for (const auto& slot : g.slots)
      if (slot.offset != 0) throw ProtocolError("step_markovian: gate set has delayed slots");
  return advance_step(mps, gates, step, truncation, swap);
}

GateApplicationReport step_non_markovian(TimeBinMPS& mps, const StepGateSet& gates, const ModelParams& params,
                                         std::int64_t step, Truncation truncation, SwapOptions swap) {
  if (params.mode != Mode::NonMarkovian) throw ProtocolError("step_non_markovian: parameters are Markovian");
  if (step < 0) throw ProtocolError("step index must be >= 0");
  for (const auto& g : gates.sub_gates)
    for (const auto& slot : g.slots)
      if (slot.offset < 0 || slot.offset > params.loop_steps())
        throw ProtocolError("step_non_markovian: slot offset outside the loop");
  return advance_step(mps, gates, step, truncation, swap);
}

Evolution::Evolution(ModelParams params, RunOptions options)
    : params_(std::move(params)), options_(options), gates_(build_step_gates(params_)), mps_(initial_state(params_)) {
  if (options_.record_every < 1) throw ArgumentError("record_every must be >= 1");
  traj_.dt = params_.dt;
  traj_.gamma_unit = params_.gamma_unit();
  traj_.loop_steps = params_.loop_steps();
  record();
}

void Evolution::step() {
  const std::int64_t n = traj_.steps_taken;
  const auto report = params_.mode == Mode::Markovian
                          ? step_markovian(mps_, gates_, n, options_.truncation, options_.swap)
                          : step_non_markovian(mps_, gates_, params_, n, options_.truncation, options_.swap);
  discarded_ += report.discarded_weight;
  max_bond_seen_ = std::max(max_bond_seen_, report.max_bond_after);
  traj_.steps_taken = n + 1;
  if (discarded_ > options_.discard_budget)
    throw RunAborted("cumulative discarded weight " + std::to_string(discarded_) + " exceeds budget " +
                     std::to_string(options_.discard_budget) + " at step " + std::to_string(n + 1) +
                     " (max bond " + std::to_string(max_bond_seen_) + ")");
  if (traj_.steps_taken % options_.record_every == 0)
    record();
  else
    finalize_and_measure(false);
}

void Evolution::record() { finalize_and_measure(true); }

void Evolution::finalize_and_measure(bool measure_all) {
  const std::int64_t horizon = finalization_horizon(params_, traj_.steps_taken);
  std::size_t n_final = 0;
  while (n_final < mps_.size() && mps_.label(n_final).kind != SiteKind::System &&
         mps_.label(n_final).index < horizon)
    ++n_final;

  const std::size_t s = mps_.system_position();
  std::vector<std::size_t> sites;
  const std::size_t measured_bins = measure_all ? mps_.size() : n_final;
  for (std::size_t i = 0; i < measured_bins; ++i)
    if (i != s) sites.push_back(i);
  const Matrix number = bin_number(mps_.bin_dim());
  std::vector<Matrix> ops(sites.size(), number);
  if (measure_all) {
    for (const auto& p : emitter_algebra().sigma22) {
      sites.push_back(s);
      ops.push_back(p);
    }
  }
  const auto values = mps_.expect_many(sites, ops);
  // Expectations are taken in the normalized state; truncation only shrinks the norm.
  const double norm2 = mps_.norm_squared();
  const double scale = norm2 > 0.0 ? 1.0 / norm2 : 0.0;

  double active_bins = 0.0;
  for (std::size_t k = 0; k < sites.size(); ++k) {
    if (sites[k] == s) continue;
    const double occ = values[k].real() * scale;
    if (sites[k] < n_final) {
      const auto& label = mps_.label(sites[k]);
      traj_.finalized_bins.push_back({label.index, label.kind == SiteKind::RightBin ? Channel::Right : Channel::Left,
                                      occ, traj_.steps_taken});
      finalized_excitation_ += occ;
    } else {
      active_bins += occ;
    }
  }
  mps_.drop_left(n_final);

  if (!measure_all) return;
  StepRecord rec;
  rec.step = traj_.steps_taken;
  rec.t_gamma = static_cast<double>(traj_.steps_taken) * params_.dt * traj_.gamma_unit;
  double system_exc = 0.0;
  for (std::size_t e = 0; e < kNumEmitters; ++e) {
    rec.populations[e] = values[values.size() - kNumEmitters + e].real() * scale;
    system_exc += rec.populations[e];
  }
  rec.norm = norm2;
  rec.total_excitation = system_exc + active_bins + finalized_excitation_;
  rec.discarded_weight_cum = discarded_;
  max_bond_seen_ = std::max(max_bond_seen_, mps_.max_bond());
  rec.max_bond = max_bond_seen_;
  traj_.records.push_back(rec);
}

RunResult run(const ModelParams& params, const RunOptions& options, TimeBinMPS* final_state) {
  validate(params);
  if (options.max_steps < 1) throw ArgumentError("max_steps must be >= 1");
  const std::int64_t window = options.steady_window > 0 ? options.steady_window : default_steady_window(params);
  if (window < params.loop_steps()) throw ArgumentError("steady-state window shorter than one loop round trip");

  Evolution evo(params, options);
  RunResult result;
  while (evo.steps_done() < options.max_steps) {
    evo.step();
    const auto& recs = evo.trajectory().records;
    if (recs.back().step != evo.steps_done()) continue;
    result.verdict = detect_steady_state(evo.trajectory(), options.steady_tol, window);
    if (result.verdict.reached && options.stop_at_steady) break;
  }
  if (evo.trajectory().records.back().step != evo.steps_done()) {
    evo.record();
    result.verdict = detect_steady_state(evo.trajectory(), options.steady_tol, window);
  }
  result.trajectory = evo.trajectory();
  if (final_state) *final_state = evo.state();
  return result;
}

double integrated_reservoir(const Trajectory& trajectory, const ModelParams& params) {
  const std::int64_t last = trajectory.steps_taken - 2 * params.loop_steps();
  double total = 0.0;
  for (const auto& b : trajectory.finalized_bins)
    if (b.bin_index <= last) total += b.occupation;
  return total;
}

SteadyStateVerdict detect_steady_state(const Trajectory& trajectory, double tol, std::int64_t window) {
  SteadyStateVerdict v;
  const auto& recs = trajectory.records;
  if (recs.empty() || window < 1) return v;
  const StepRecord& now = recs.back();
  v.at_step = now.step;
  if (now.step < window) {
    v.residual = std::numeric_limits<double>::infinity();
    return v;
  }
  double drift = 0.0;
  for (auto it = recs.rbegin(); it != recs.rend() && it->step >= now.step - window; ++it)
    for (std::size_t e = 0; e < kNumEmitters; ++e)
      drift = std::max(drift, std::abs(now.populations[e] - it->populations[e]));
  v.residual = drift;
  bool quiet = true;
  for (auto it = trajectory.finalized_bins.rbegin();
       it != trajectory.finalized_bins.rend() && it->finalized_at_step > now.step - window; ++it)
    if (it->occupation >= tol) quiet = false;
  v.reached = drift < tol && quiet;
  return v;
}

}  // namespace wgqed

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "wgqed/model.hpp"
#include "wgqed/mps.hpp"

namespace wgqed {

/// Expectation values are normalized by <psi|psi>, so truncation shows up in
/// `norm` rather than as a loss of excitation.
struct StepRecord {
  std::int64_t step = 0;
  double t_gamma = 0.0;
  std::array<double, kNumEmitters> populations{};
  double norm = 1.0;  ///< <psi|psi>
  double total_excitation = 0.0;  ///< system + every materialized bin, finalized or not
  double discarded_weight_cum = 0.0;
  std::size_t max_bond = 1;
};

struct FinalizedBin {
  std::int64_t bin_index = 0;
  Channel channel = Channel::Right;
  double occupation = 0.0;
  std::int64_t finalized_at_step = 0;
};

struct Trajectory {
  std::vector<StepRecord> records;
  std::vector<FinalizedBin> finalized_bins;
  std::int64_t steps_taken = 0;
  double dt = 0.0;
  double gamma_unit = 1.0;
  std::int64_t loop_steps = 0;
};

struct SteadyStateVerdict {
  bool reached = false;
  std::int64_t at_step = 0;
  double residual = 0.0;  ///< largest population drift over the trailing window
};

struct RunOptions {
  std::int64_t max_steps = 1000;
  std::int64_t record_every = 1;
  double steady_tol = 1e-5;
  /// Trailing window in steps; 0 selects default_steady_window().
  std::int64_t steady_window = 0;
  bool stop_at_steady = true;
  Truncation truncation{128, 1e-12};
  SwapOptions swap;
  /// Cumulative discarded weight at which the run is aborted.
  double discard_budget = 1e-6;
};

/// Three loop round trips, and at least one inverse decay rate.
[[nodiscard]] std::int64_t default_steady_window(const ModelParams& params);

/// Bins whose index is below this at `steps_done` completed steps are final.
[[nodiscard]] std::int64_t finalization_horizon(const ModelParams& params, std::int64_t steps_done);

/// Initial chain for `params`: the past vacuum bins that delayed couplings will
/// reach during the first loop traversal, then the system site.
[[nodiscard]] TimeBinMPS initial_state(const ModelParams& params);

/// One Markovian step (step index `step`): the fresh bins are appended, the
/// gate is applied, and the system moves past them. Center ends on the system.
GateApplicationReport step_markovian(TimeBinMPS& mps, const StepGateSet& gates, std::int64_t step,
                                     Truncation truncation, SwapOptions swap = {});

/// One non-Markovian step: each sub-gate's delayed bins are swapped next to the
/// system, the gate applied, and the bins swapped back.
GateApplicationReport step_non_markovian(TimeBinMPS& mps, const StepGateSet& gates, const ModelParams& params,
                                         std::int64_t step, Truncation truncation, SwapOptions swap = {});

/// Stateful stepper shared by run() and the CLI drivers.
class Evolution {
 public:
  Evolution(ModelParams params, RunOptions options);

  /// Advances one step, finalizes expired bins, and records if due.
  void step();
  /// Records the current state regardless of record_every.
  void record();

  [[nodiscard]] const Trajectory& trajectory() const noexcept { return traj_; }
  [[nodiscard]] const TimeBinMPS& state() const noexcept { return mps_; }
  [[nodiscard]] const StepGateSet& gates() const noexcept { return gates_; }
  [[nodiscard]] std::int64_t steps_done() const noexcept { return traj_.steps_taken; }
  [[nodiscard]] double discarded_weight() const noexcept { return discarded_; }

 private:
  void finalize_and_measure(bool measure_all);

  ModelParams params_;
  RunOptions options_;
  StepGateSet gates_;
  TimeBinMPS mps_;
  Trajectory traj_;
  double discarded_ = 0.0;
  double finalized_excitation_ = 0.0;
  std::size_t max_bond_seen_ = 1;
};

struct RunResult {
  Trajectory trajectory;
  SteadyStateVerdict verdict;
};

/// Steps until the steady-state verdict (if stop_at_steady) or max_steps.
/// Throws RunAborted when the discarded-weight budget is exceeded. The final
/// chain is copied to `final_state` when given.
[[nodiscard]] RunResult run(const ModelParams& params, const RunOptions& options,
                            TimeBinMPS* final_state = nullptr);

/// Sum of finalized outgoing bin occupations over bins 0..N-f (negative input
/// bins included), f = 2(m1+m3) excluding the loop region.
[[nodiscard]] double integrated_reservoir(const Trajectory& trajectory, const ModelParams& params);

/// Reached when, over the trailing `window` steps, no population moved by tol
/// or more and every bin finalized in that window holds less than tol.
[[nodiscard]] SteadyStateVerdict detect_steady_state(const Trajectory& trajectory, double tol,
                                                     std::int64_t window);

}  // namespace wgqed

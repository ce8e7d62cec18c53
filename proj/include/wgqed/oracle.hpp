#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "wgqed/evolution.hpp"
#include "wgqed/model.hpp"

namespace wgqed {

/// Populations sampled on a time grid (physical time, not scaled by gamma).
struct PopulationSeries {
  std::vector<double> times;
  std::vector<std::array<double, kNumEmitters>> populations;
};

[[nodiscard]] PopulationSeries population_series(const Trajectory& trajectory);

struct BruteForceOptions {
  /// Largest number of stored amplitudes.
  std::size_t max_amplitudes = std::size_t{1} << 24;
};

struct BruteForceResult {
  std::vector<StepRecord> records;  ///< one per step, step 0 included
  /// Final occupation of every bin ever touched, keyed by (channel, index).
  std::map<std::pair<Channel, std::int64_t>, double> bin_occupations;
  std::size_t stored_amplitudes = 0;
};

/// Exact evolution of the full system-plus-bins state vector under the same
/// StepGateSet. Amplitudes are stored sparsely by basis index; since every gate
/// conserves the joint excitation number, only the reachable sector is kept.
/// Throws OracleError when the reachable sector exceeds the memory bound.
[[nodiscard]] BruteForceResult brute_force_run(const ModelParams& params, std::int64_t n_steps,
                                               BruteForceOptions options = {});

/// Size of the reachable sector brute_force_run would need for n_steps.
[[nodiscard]] std::size_t brute_force_required_size(const ModelParams& params, std::int64_t n_steps);

struct LindbladResult {
  PopulationSeries series;  ///< sampled every dt_ode
  double max_trace_drift = 0.0;
  double min_eigenvalue = 0.0;  ///< smallest eigenvalue of rho seen at checkpoints
};

/// Fixed-step RK4 integration of the two-channel collective master equation
/// with the Markovian jump operators. Throws OracleError on trace drift > 1e-8.
[[nodiscard]] LindbladResult lindblad_run(const ModelParams& params, double t_end, double dt_ode);
[[nodiscard]] LindbladResult lindblad_run(const ModelParams& params, const Matrix& rho0, double t_end,
                                          double dt_ode);

struct ComparisonReport {
  std::array<double, kNumEmitters> max_abs_diff{};
  double max_diff = 0.0;
  std::size_t points = 0;
  bool pass = false;
};

/// Compares populations on the reference grid of `mps`. Without interpolation
/// the time grids must coincide; with it, `oracle` is linearly interpolated.
[[nodiscard]] ComparisonReport compare(const PopulationSeries& mps, const PopulationSeries& oracle,
                                       double tolerance, bool interpolate = false);

}  // namespace wgqed

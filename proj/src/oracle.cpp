#include "wgqed/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "wgqed/errors.hpp"

namespace wgqed {

PopulationSeries population_series(const Trajectory& trajectory) {
  PopulationSeries s;
  for (const auto& r : trajectory.records) {
    s.times.push_back(static_cast<double>(r.step) * trajectory.dt);
    s.populations.push_back(r.populations);
  }
  return s;
}

namespace {

int max_initial_excitation(const ModelParams& params) {
  int e = 0;
  for (unsigned s = 0; s < kSystemDim; ++s)
    if (params.initial_system[s] != cplx{0.0}) e = std::max(e, std::popcount(s));
  return e;
}

// Sparse state over system (x) bins in registration order. Basis index
// = system + 8 * sum_k digit_k * p^k.
class SparseState {
 public:
  SparseState(std::size_t p, const SystemState& system) : p_(p) {
    for (std::size_t s = 0; s < kSystemDim; ++s)
      if (system[s] != cplx{0.0}) amps_[s] = system[s];
  }

  std::size_t ensure_bin(Channel channel, std::int64_t index) {
    const auto key = std::make_pair(channel, index);
    auto it = slot_of_.find(key);
    if (it != slot_of_.end()) return it->second;
    const std::uint64_t stride = next_stride_;
    if (stride > std::numeric_limits<std::uint64_t>::max() / p_)
      throw OracleError("basis index overflow: too many bins for the brute-force oracle");
    next_stride_ *= p_;
    strides_.push_back(stride);
    keys_.push_back(key);
    slot_of_[key] = strides_.size() - 1;
    return strides_.size() - 1;
  }

  void apply(const Matrix& u, const std::vector<std::size_t>& bins, std::size_t max_amplitudes) {
    const std::size_t n = bins.size();
    std::size_t local_bins = 1;
    for (std::size_t k = 0; k < n; ++k) local_bins *= p_;
    const auto dim = static_cast<Eigen::Index>(kSystemDim * local_bins);
    // Nonzero entries per column.
    std::vector<std::vector<std::pair<Eigen::Index, cplx>>> columns(static_cast<std::size_t>(dim));
    for (Eigen::Index c = 0; c < dim; ++c)
      for (Eigen::Index r = 0; r < dim; ++r)
        if (u(r, c) != cplx{0.0}) columns[static_cast<std::size_t>(c)].emplace_back(r, u(r, c));

    auto offset_of = [&](std::size_t local) {
      // local = s * p^n + digits (first slot most significant)
      std::uint64_t off = 0;
      std::size_t rest = local % local_bins;
      for (std::size_t k = n; k-- > 0;) {
        off += (rest % p_) * strides_[bins[k]];
        rest /= p_;
      }
      return (local / local_bins) + off;
    };

    std::unordered_map<std::uint64_t, cplx> out;
    out.reserve(amps_.size() * 2);
    for (const auto& [idx, amp] : amps_) {
      std::size_t local = idx % kSystemDim;
      std::uint64_t base = idx - local;
      for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t digit = (idx / strides_[bins[k]]) % p_;
        base -= digit * strides_[bins[k]];
        local = local * p_ + digit;
      }
      // `local` above is s * p^n + digits with the system slowest.
      for (const auto& [r, v] : columns[local]) out[base + offset_of(static_cast<std::size_t>(r))] += v * amp;
      if (out.size() > max_amplitudes)
        throw OracleError("brute-force state needs more than " + std::to_string(max_amplitudes) + " amplitudes");
    }
    amps_ = std::move(out);
  }

  [[nodiscard]] double norm_squared() const {
    double n = 0.0;
    for (const auto& [idx, a] : amps_) n += std::norm(a);
    return n;
  }

  [[nodiscard]] std::array<double, kNumEmitters> populations() const {
    std::array<double, kNumEmitters> pops{};
    for (const auto& [idx, a] : amps_) {
      const auto s = static_cast<unsigned>(idx % kSystemDim);
      for (std::size_t e = 0; e < kNumEmitters; ++e)
        if (s & (1u << (kNumEmitters - 1 - e))) pops[e] += std::norm(a);
    }
    return pops;
  }

  [[nodiscard]] std::vector<double> occupations() const {
    std::vector<double> occ(strides_.size(), 0.0);
    for (const auto& [idx, a] : amps_)
      for (std::size_t k = 0; k < strides_.size(); ++k)
        occ[k] += static_cast<double>((idx / strides_[k]) % p_) * std::norm(a);
    return occ;
  }

  [[nodiscard]] const std::vector<std::pair<Channel, std::int64_t>>& keys() const { return keys_; }
  [[nodiscard]] std::size_t stored() const { return amps_.size(); }

 private:
  std::size_t p_;
  std::unordered_map<std::uint64_t, cplx> amps_;
  std::vector<std::uint64_t> strides_;
  std::vector<std::pair<Channel, std::int64_t>> keys_;
  std::map<std::pair<Channel, std::int64_t>, std::size_t> slot_of_;
  std::uint64_t next_stride_ = kSystemDim;
};

}  // namespace

std::size_t brute_force_required_size(const ModelParams& params, std::int64_t n_steps) {
  const int e_max = max_initial_excitation(params);
  const std::int64_t n_bins = 2 * (n_steps + params.loop_steps());
  const auto p = static_cast<int>(params.bin_dim);
  // ways[k]: bin configurations holding k photons in total.
  std::vector<double> ways(static_cast<std::size_t>(e_max) + 1, 0.0);
  ways[0] = 1.0;
  for (std::int64_t b = 0; b < n_bins; ++b) {
    std::vector<double> next(ways.size(), 0.0);
    for (std::size_t k = 0; k < ways.size(); ++k)
      for (int d = 0; d < p && k + static_cast<std::size_t>(d) < ways.size(); ++d) next[k + static_cast<std::size_t>(d)] += ways[k];
    ways = std::move(next);
  }
  double total = 0.0;
  for (unsigned s = 0; s < kSystemDim; ++s) {
    const int pc = std::popcount(s);
    if (pc > e_max) continue;
    // Exact conservation: system excitations + photons equals the initial value
    // in each branch, so photons <= e_max - pc.
    for (int k = 0; k <= e_max - pc; ++k) total += ways[static_cast<std::size_t>(k)];
  }
  return total > 1e18 ? std::numeric_limits<std::size_t>::max() : static_cast<std::size_t>(total);
}

BruteForceResult brute_force_run(const ModelParams& params, std::int64_t n_steps, BruteForceOptions options) {
  validate(params);
  if (n_steps < 0) throw ArgumentError("n_steps must be >= 0");
  const std::size_t required = brute_force_required_size(params, n_steps);
  if (required > options.max_amplitudes)
    throw OracleError("brute-force oracle needs up to " + std::to_string(required) +
                      " amplitudes, bound is " + std::to_string(options.max_amplitudes));

  const StepGateSet gates = build_step_gates(params);
  SparseState state(params.bin_dim, params.initial_system);
  BruteForceResult result;

  auto record = [&](std::int64_t step) {
    StepRecord rec;
    rec.step = step;
    rec.t_gamma = static_cast<double>(step) * params.dt * params.gamma_unit();
    rec.populations = state.populations();
    rec.norm = state.norm_squared();
    double exc = rec.populations[0] + rec.populations[1] + rec.populations[2];
    for (double o : state.occupations()) exc += o;
    rec.total_excitation = exc;
    result.records.push_back(rec);
  };

  record(0);
  for (std::int64_t n = 0; n < n_steps; ++n) {
    for (const auto& gate : gates.sub_gates) {
      std::vector<std::size_t> bins;
      for (const auto& slot : gate.slots) bins.push_back(state.ensure_bin(slot.channel, n - slot.offset));
      state.apply(gate.unitary, bins, options.max_amplitudes);
    }
    record(n + 1);
  }
  const auto occ = state.occupations();
  for (std::size_t k = 0; k < occ.size(); ++k) result.bin_occupations[state.keys()[k]] = occ[k];
  result.stored_amplitudes = state.stored();
  return result;
}

LindbladResult lindblad_run(const ModelParams& params, double t_end, double dt_ode) {
  Eigen::Map<const Eigen::Matrix<cplx, kSystemDim, 1>> psi(params.initial_system.data());
  const Matrix rho0 = psi * psi.adjoint();
  return lindblad_run(params, rho0, t_end, dt_ode);
}

LindbladResult lindblad_run(const ModelParams& params, const Matrix& rho0, double t_end, double dt_ode) {
  if (params.mode != Mode::Markovian) throw ArgumentError("the master-equation oracle needs Markovian parameters");
  if (!(dt_ode > 0.0) || !(t_end >= 0.0)) throw ArgumentError("lindblad_run: need dt_ode > 0 and t_end >= 0");
  if (rho0.rows() != static_cast<Eigen::Index>(kSystemDim) || rho0.cols() != rho0.rows())
    throw ArgumentError("lindblad_run: density matrix must be 8x8");

  const auto jumps = markovian_jump_operators(params);
  const Matrix h = detuning_hamiltonian(params);
  const std::array<Matrix, 2> js{jumps.right, jumps.left};
  Matrix damping = Matrix::Zero(kSystemDim, kSystemDim);
  for (const auto& j : js) damping += j.adjoint() * j;
  // drho/dt = -i[H, rho] + sum_c J rho J^dagger - 1/2 {J^dagger J, rho}
  const Matrix heff = h - cplx(0.0, 0.5) * damping;
  auto rhs = [&](const Matrix& rho) {
    Matrix d = cplx(0.0, -1.0) * (heff * rho - rho * heff.adjoint());
    for (const auto& j : js) d += j * rho * j.adjoint();
    return d;
  };

  const auto& alg = emitter_algebra();
  LindbladResult out;
  Matrix rho = rho0;
  auto sample = [&](double t) {
    out.series.times.push_back(t);
    std::array<double, kNumEmitters> pops{};
    for (std::size_t e = 0; e < kNumEmitters; ++e) pops[e] = (rho * alg.sigma22[e]).trace().real();
    out.series.populations.push_back(pops);
  };
  auto check_positive = [&]() {
    const Eigen::MatrixXcd herm = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(herm, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = std::min(out.min_eigenvalue, eig.eigenvalues().minCoeff());
  };

  const double trace0 = rho0.trace().real();
  const auto n_steps = static_cast<std::int64_t>(std::llround(t_end / dt_ode));
  sample(0.0);
  check_positive();
  for (std::int64_t n = 0; n < n_steps; ++n) {
    const Matrix k1 = rhs(rho);
    const Matrix k2 = rhs(rho + 0.5 * dt_ode * k1);
    const Matrix k3 = rhs(rho + 0.5 * dt_ode * k2);
    const Matrix k4 = rhs(rho + dt_ode * k3);
    rho += (dt_ode / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double drift = std::abs(rho.trace().real() - trace0);
    out.max_trace_drift = std::max(out.max_trace_drift, drift);
    if (drift > 1e-8)
      throw OracleError("master-equation trace drifted by " + std::to_string(drift) + " at step " +
                        std::to_string(n + 1) + "; reduce dt_ode");
    sample(static_cast<double>(n + 1) * dt_ode);
    if ((n + 1) % 1000 == 0) check_positive();
  }
  check_positive();
  return out;
}

ComparisonReport compare(const PopulationSeries& mps, const PopulationSeries& oracle, double tolerance,
                         bool interpolate) {
  if (mps.times.size() != mps.populations.size() || oracle.times.size() != oracle.populations.size())
    throw ArgumentError("compare: malformed series");
  if (oracle.times.empty()) throw ArgumentError("compare: empty oracle series");
  ComparisonReport rep;

  auto accumulate = [&](const std::array<double, kNumEmitters>& a, const std::array<double, kNumEmitters>& b) {
    for (std::size_t e = 0; e < kNumEmitters; ++e) {
      const double d = std::abs(a[e] - b[e]);
      rep.max_abs_diff[e] = std::max(rep.max_abs_diff[e], d);
      rep.max_diff = std::max(rep.max_diff, d);
    }
    ++rep.points;
  };

  if (!interpolate) {
    if (mps.times.size() != oracle.times.size())
      throw ArgumentError("compare: time grids differ in length and interpolation is disabled");
    for (std::size_t k = 0; k < mps.times.size(); ++k) {
      if (std::abs(mps.times[k] - oracle.times[k]) > 1e-9 * std::max(1.0, std::abs(mps.times[k])))
        throw ArgumentError("compare: time grids differ and interpolation is disabled");
      accumulate(mps.populations[k], oracle.populations[k]);
    }
  } else {
    const double t_last = oracle.times.back();
    for (std::size_t k = 0; k < mps.times.size(); ++k) {
      const double t = mps.times[k];
      if (t < oracle.times.front() - 1e-12 || t > t_last + 1e-9 * std::max(1.0, t_last))
        throw ArgumentError("compare: reference time outside the oracle grid");
      auto it = std::lower_bound(oracle.times.begin(), oracle.times.end(), t);
      std::size_t hi = static_cast<std::size_t>(it - oracle.times.begin());
      if (hi >= oracle.times.size()) hi = oracle.times.size() - 1;
      std::array<double, kNumEmitters> interp = oracle.populations[hi];
      if (hi > 0 && std::abs(oracle.times[hi] - t) > 1e-12) {
        const std::size_t lo = hi - 1;
        const double w = (t - oracle.times[lo]) / (oracle.times[hi] - oracle.times[lo]);
        for (std::size_t e = 0; e < kNumEmitters; ++e)
          interp[e] = (1.0 - w) * oracle.populations[lo][e] + w * oracle.populations[hi][e];
      }
      accumulate(mps.populations[k], interp);
    }
  }
  rep.pass = rep.max_diff <= tolerance;
  return rep;
}

}  // namespace wgqed

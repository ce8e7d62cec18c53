#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wgqed/tensor.hpp"

namespace wgqed {

inline constexpr std::size_t kNumEmitters = 3;
inline constexpr std::size_t kSystemDim = 8;

using SystemState = std::array<cplx, kSystemDim>;

enum class Mode { Markovian, NonMarkovian };
enum class Channel : std::uint8_t { Right, Left };
enum class TrotterOrder { First, SecondSymmetric };

[[nodiscard]] std::string to_string(Mode mode);
[[nodiscard]] std::string to_string(Channel channel);

/// Physical configuration of the three-emitter waveguide.
///
/// Emitter 2 sits at the origin, emitter 1 a propagation time tau1/2 to its
/// left and emitter 3 a time tau3/2 to its right. Delays enter as integer bin
/// counts m1 = tau1/(2 dt) and m3 = tau3/(2 dt); the loop time between the outer
/// emitters is tau = (tau1 + tau3)/2 = (m1 + m3) dt.
struct ModelParams {
  std::array<double, kNumEmitters> gamma{1.0, 1.0, 1.0};  ///< decay rate into each channel
  double delta1 = 0.0;  ///< detuning of emitter 1 relative to emitter 2
  double delta3 = 0.0;  ///< detuning of emitter 3 relative to emitter 2
  std::int64_t m1 = 0;
  std::int64_t m3 = 0;
  double dt = 0.01;
  double phi_tau1 = 0.0;  ///< omega_0 * tau1 (radians)
  double phi_tau3 = 0.0;  ///< omega_0 * tau3 (radians)
  std::size_t bin_dim = 3;
  Mode mode = Mode::Markovian;
  SystemState initial_system{0, 0, 0, 0, 0, 0, 0, 1};
  /// Markovian mode only: explicit per-emitter phases used for both channels.
  std::optional<std::array<double, kNumEmitters>> markovian_phases;
  TrotterOrder trotter = TrotterOrder::SecondSymmetric;
  /// Merge sub-gates that share a bin slot into one exactly exponentiated gate.
  bool fuse_shared_slots = true;
  /// Permit m1 = m3 = 0 in non-Markovian mode (zero-delay reduction checks).
  bool allow_zero_delay = false;

  /// Bins between the outer emitters, in steps (0 in Markovian mode).
  [[nodiscard]] std::int64_t loop_steps() const noexcept {
    return mode == Mode::NonMarkovian ? m1 + m3 : 0;
  }
  /// omega_0 * tau.
  [[nodiscard]] double loop_phase() const noexcept { return 0.5 * (phi_tau1 + phi_tau3); }
  /// Largest decay rate, or 1 when every emitter is decoupled. Used as the time unit.
  [[nodiscard]] double gamma_unit() const noexcept;
};

/// Throws ArgumentError describing the first violated constraint.
void validate(const ModelParams& params);

/// Phases attached to sigma12_i in the right- and left-channel couplings.
struct CouplingPhases {
  std::array<double, kNumEmitters> right{};
  std::array<double, kNumEmitters> left{};
};
[[nodiscard]] CouplingPhases coupling_phases(const ModelParams& params);

/// Emitter operators in the collective basis |ijk> = |(i-1)*4 + (j-1)*2 + (k-1)>,
/// emitter 1 being the most significant bit.
struct EmitterAlgebra {
  std::array<Matrix, kNumEmitters> sigma12;  ///< lowering operators |1><2|
  std::array<Matrix, kNumEmitters> sigma22;  ///< excited-state projectors
  Matrix excitation_number;
};
[[nodiscard]] const EmitterAlgebra& emitter_algebra();
[[nodiscard]] EmitterAlgebra build_emitter_algebra();

/// Truncated bosonic annihilation operator on p levels.
[[nodiscard]] Matrix bin_annihilation(std::size_t p);
[[nodiscard]] Matrix bin_number(std::size_t p);

/// A time bin relative to the current step: channel plus how many steps in the
/// past it was created (bin index = step - offset).
struct BinSlot {
  Channel channel = Channel::Right;
  std::int64_t offset = 0;
  friend bool operator==(const BinSlot&, const BinSlot&) = default;
};

/// Hermitian step generator acting on system (x) slots[0] (x) slots[1] ...
struct StepGenerator {
  Matrix generator;
  std::vector<BinSlot> slots;
};

/// K_i for emitter i in {0, 1, 2}: sqrt(gamma_i dt) coupling to its right and
/// left bins (in that slot order) plus its detuning term.
[[nodiscard]] StepGenerator build_step_generator(const ModelParams& params, std::size_t emitter);

/// Embeds a generator onto a larger ordered slot list (identity on extra bins).
[[nodiscard]] Matrix embed_generator(const StepGenerator& g, const std::vector<BinSlot>& slots,
                                     std::size_t bin_dim);

/// exp(-i * prefactor * h) computed block by block over the sectors of the
/// joint excitation number, so the result conserves it exactly.
[[nodiscard]] Matrix exponentiate_conserving(const Matrix& h, std::size_t bin_dim,
                                             std::size_t n_bins, double prefactor);

/// Joint excitation number (system + photons) on system (x) n_bins bins.
[[nodiscard]] Matrix joint_excitation_number(std::size_t bin_dim, std::size_t n_bins);

struct SubGate {
  std::vector<std::size_t> emitters;  ///< emitter ids (0-based) whose generators it contains
  std::vector<BinSlot> slots;
  Matrix unitary;  ///< on system (x) slots in listed order
  double time_fraction = 1.0;  ///< fraction of dt this gate advances
};

struct StepGateSet {
  std::vector<SubGate> sub_gates;  ///< applied in this order every step
  TrotterOrder ordering = TrotterOrder::SecondSymmetric;
  /// True when the sub-gates act on pairwise disjoint slots, so their product is
  /// the exact step propagator irrespective of ordering.
  bool exact = false;
};

/// Precomputes the per-step unitaries. Markovian: one gate on the current two
/// bins. Non-Markovian: one gate per emitter on its delayed slots.
[[nodiscard]] StepGateSet build_step_gates(const ModelParams& params);

/// Collective jump operators of the Markovian limit for the two channels.
struct JumpOperators {
  Matrix right;
  Matrix left;
};
[[nodiscard]] JumpOperators markovian_jump_operators(const ModelParams& params);

/// delta1 * sigma22_1 + delta3 * sigma22_3.
[[nodiscard]] Matrix detuning_hamiltonian(const ModelParams& params);

}  // namespace wgqed

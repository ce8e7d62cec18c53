#include "wgqed/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "wgqed/errors.hpp"

namespace wgqed {

std::string to_string(Mode mode) {
  return mode == Mode::Markovian ? "markovian" : "non-markovian";
}

std::string to_string(Channel channel) { return channel == Channel::Right ? "R" : "L"; }

double ModelParams::gamma_unit() const noexcept {
  const double g = *std::max_element(gamma.begin(), gamma.end());
  return g > 0.0 ? g : 1.0;
}

void validate(const ModelParams& params) {
  for (double g : params.gamma)
    if (!(g >= 0.0) || !std::isfinite(g)) throw ArgumentError("decay rates must be finite and >= 0");
  if (!(params.dt > 0.0) || !std::isfinite(params.dt)) throw ArgumentError("dt must be positive");
  if (params.bin_dim < 2) throw ArgumentError("bin dimension must be >= 2");
  if (params.m1 < 0 || params.m3 < 0) throw ArgumentError("delay bin counts must be >= 0");
  if (params.mode == Mode::NonMarkovian && params.m1 + params.m3 < 1 && !params.allow_zero_delay)
    throw ArgumentError("non-Markovian mode needs m1 + m3 >= 1");
  if (params.mode == Mode::NonMarkovian && params.markovian_phases)
    throw ArgumentError("explicit Markovian phases are only meaningful in Markovian mode");
  if (!std::isfinite(params.delta1) || !std::isfinite(params.delta3) ||
      !std::isfinite(params.phi_tau1) || !std::isfinite(params.phi_tau3))
    throw ArgumentError("detunings and phases must be finite");
  double n2 = 0.0;
  for (const auto& a : params.initial_system) n2 += std::norm(a);
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-12) throw ArgumentError("initial system state is not normalized");
}

CouplingPhases coupling_phases(const ModelParams& params) {
  CouplingPhases ph;
  if (params.mode == Mode::Markovian && params.markovian_phases) {
    ph.right = *params.markovian_phases;
    ph.left = *params.markovian_phases;
    return ph;
  }
  const double loop = params.loop_phase();
  ph.right = {0.0, 0.5 * params.phi_tau1, loop};
  ph.left = {loop, 0.5 * params.phi_tau3, 0.0};
  return ph;
}

EmitterAlgebra build_emitter_algebra() {
  EmitterAlgebra alg;
  alg.excitation_number = Matrix::Zero(kSystemDim, kSystemDim);
  for (std::size_t e = 0; e < kNumEmitters; ++e) {
    // Emitter 1 is the most significant bit of the basis index.
    const unsigned bit = 1u << (kNumEmitters - 1 - e);
    Matrix lower = Matrix::Zero(kSystemDim, kSystemDim);
    for (unsigned s = 0; s < kSystemDim; ++s)
      if (s & bit) lower(s & ~bit, s) = 1.0;
    alg.sigma12[e] = lower;
    alg.sigma22[e] = lower.adjoint() * lower;
    alg.excitation_number += alg.sigma22[e];
  }
  return alg;
}

const EmitterAlgebra& emitter_algebra() {
  static const EmitterAlgebra alg = build_emitter_algebra();
  return alg;
}

Matrix bin_annihilation(std::size_t p) {
  Matrix b = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t k = 1; k < p; ++k) b(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = std::sqrt(double(k));
  return b;
}

Matrix bin_number(std::size_t p) {
  Matrix n = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < p; ++k) n(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = double(k);
  return n;
}

namespace {

Matrix identity(std::size_t n) {
  return Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

// Operator on bin `which` of n_bins, identity elsewhere.
Matrix on_bin(const Matrix& op, std::size_t which, std::size_t n_bins, std::size_t p) {
  Matrix out = identity(1);
  for (std::size_t k = 0; k < n_bins; ++k) out = kron(out, k == which ? op : identity(p));
  return out;
}

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

std::vector<int> joint_excitations(std::size_t p, std::size_t n_bins) {
  const std::size_t bins_dim = ipow(p, n_bins);
  std::vector<int> exc(kSystemDim * bins_dim);
  for (std::size_t s = 0; s < kSystemDim; ++s)
    for (std::size_t b = 0; b < bins_dim; ++b) {
      int count = std::popcount(static_cast<unsigned>(s));
      std::size_t rest = b;
      for (std::size_t k = 0; k < n_bins; ++k) {
        count += static_cast<int>(rest % p);
        rest /= p;
      }
      exc[s * bins_dim + b] = count;
    }
  return exc;
}

}  // namespace

Matrix joint_excitation_number(std::size_t bin_dim, std::size_t n_bins) {
  const auto exc = joint_excitations(bin_dim, n_bins);
  Matrix n = Matrix::Zero(static_cast<Eigen::Index>(exc.size()), static_cast<Eigen::Index>(exc.size()));
  for (std::size_t i = 0; i < exc.size(); ++i) n(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = exc[i];
  return n;
}

StepGenerator build_step_generator(const ModelParams& params, std::size_t emitter) {
  validate(params);
  if (emitter >= kNumEmitters) throw ArgumentError("emitter id out of range");
  const auto& alg = emitter_algebra();
  const std::size_t p = params.bin_dim;
  const CouplingPhases ph = coupling_phases(params);

  StepGenerator out;
  if (params.mode == Mode::Markovian) {
    out.slots = {{Channel::Right, 0}, {Channel::Left, 0}};
  } else {
    const std::int64_t m1 = params.m1;
    const std::int64_t m3 = params.m3;
    switch (emitter) {
      case 0: out.slots = {{Channel::Right, 0}, {Channel::Left, m1 + m3}}; break;
      case 1: out.slots = {{Channel::Right, m1}, {Channel::Left, m3}}; break;
      default: out.slots = {{Channel::Right, m1 + m3}, {Channel::Left, 0}}; break;
    }
  }

  const Matrix create = bin_annihilation(p).adjoint();
  const Matrix field = std::polar(1.0, ph.right[emitter]) * on_bin(create, 0, 2, p) +
                       std::polar(1.0, ph.left[emitter]) * on_bin(create, 1, 2, p);
  const double coupling = std::sqrt(params.gamma[emitter] * params.dt);
  Matrix emission = coupling * kron(alg.sigma12[emitter], field);
  out.generator = emission + emission.adjoint();

  const double detuning = emitter == 0 ? params.delta1 : (emitter == 2 ? params.delta3 : 0.0);
  if (detuning != 0.0)
    out.generator += params.dt * detuning * kron(alg.sigma22[emitter], identity(p * p));
  return out;
}

Matrix embed_generator(const StepGenerator& g, const std::vector<BinSlot>& slots, std::size_t bin_dim) {
  // Position of each of g's slots inside the target list.
  std::vector<std::size_t> where;
  for (const auto& s : g.slots) {
    auto it = std::find(slots.begin(), slots.end(), s);
    if (it == slots.end()) throw ArgumentError("embed_generator: slot missing from target list");
    where.push_back(static_cast<std::size_t>(it - slots.begin()));
  }
  const std::size_t n_src = g.slots.size();
  const std::size_t n_dst = slots.size();
  const std::size_t src_bins = ipow(bin_dim, n_src);
  const std::size_t dst_bins = ipow(bin_dim, n_dst);
  const std::size_t dim = kSystemDim * dst_bins;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));

  auto digits = [&](std::size_t idx, std::size_t n) {
    std::vector<std::size_t> d(n);
    for (std::size_t k = n; k-- > 0;) {
      d[k] = idx % bin_dim;
      idx /= bin_dim;
    }
    return d;
  };
  auto compose = [&](const std::vector<std::size_t>& d) {
    std::size_t idx = 0;
    for (std::size_t x : d) idx = idx * bin_dim + x;
    return idx;
  };

  for (std::size_t row = 0; row < dim; ++row) {
    const std::size_t s_row = row / dst_bins;
    const auto d_row = digits(row % dst_bins, n_dst);
    std::vector<std::size_t> src_row(n_src);
    for (std::size_t k = 0; k < n_src; ++k) src_row[k] = d_row[where[k]];
    const std::size_t g_row = s_row * src_bins + compose(src_row);
    for (std::size_t s_col = 0; s_col < kSystemDim; ++s_col)
      for (std::size_t src_col_bins = 0; src_col_bins < src_bins; ++src_col_bins) {
        const cplx v = g.generator(static_cast<Eigen::Index>(g_row),
                                   static_cast<Eigen::Index>(s_col * src_bins + src_col_bins));
        if (v == cplx{0.0}) continue;
        auto d_col = d_row;
        const auto src_col = digits(src_col_bins, n_src);
        for (std::size_t k = 0; k < n_src; ++k) d_col[where[k]] = src_col[k];
        out(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(s_col * dst_bins + compose(d_col))) += v;
      }
  }
  return out;
}

Matrix exponentiate_conserving(const Matrix& h, std::size_t bin_dim, std::size_t n_bins, double prefactor) {
  const auto exc = joint_excitations(bin_dim, n_bins);
  const auto dim = static_cast<Eigen::Index>(exc.size());
  if (h.rows() != dim || h.cols() != dim) throw DimensionError("generator dimension does not match space");

  const int max_exc = *std::max_element(exc.begin(), exc.end());
  Matrix u = Matrix::Zero(dim, dim);
  double leak = 0.0;
  for (int sector = 0; sector <= max_exc; ++sector) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < dim; ++i)
      if (exc[static_cast<std::size_t>(i)] == sector) idx.push_back(i);
    if (idx.empty()) continue;
    const auto n = static_cast<Eigen::Index>(idx.size());
    Matrix block(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) block(a, b) = h(idx[a], idx[b]);
    const Matrix ub = exponentiate_generator(block, prefactor);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) u(idx[a], idx[b]) = ub(a, b);
  }
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j)
      if (exc[static_cast<std::size_t>(i)] != exc[static_cast<std::size_t>(j)]) leak = std::max(leak, std::abs(h(i, j)));
  if (leak > 1e-14) throw ArgumentError("generator does not conserve the joint excitation number");
  return u;
}

namespace {

SubGate make_gate(std::vector<std::size_t> emitters, const std::vector<StepGenerator>& gens,
                  std::size_t bin_dim, double fraction) {
  SubGate gate;
  gate.emitters = std::move(emitters);
  for (std::size_t e : gate.emitters)
    for (const auto& s : gens[e].slots)
      if (std::find(gate.slots.begin(), gate.slots.end(), s) == gate.slots.end()) gate.slots.push_back(s);
  const std::size_t dim = kSystemDim * ipow(bin_dim, gate.slots.size());
  Matrix h = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t e : gate.emitters) h += embed_generator(gens[e], gate.slots, bin_dim);
  gate.unitary = exponentiate_conserving(h, bin_dim, gate.slots.size(), fraction);
  gate.time_fraction = fraction;
  return gate;
}

bool share_slot(const std::vector<BinSlot>& a, const std::vector<BinSlot>& b) {
  return std::any_of(a.begin(), a.end(),
                     [&](const BinSlot& s) { return std::find(b.begin(), b.end(), s) != b.end(); });
}

}  // namespace

StepGateSet build_step_gates(const ModelParams& params) {
  validate(params);
  StepGateSet set;
  set.ordering = params.trotter;
  std::vector<StepGenerator> gens;
  for (std::size_t e = 0; e < kNumEmitters; ++e) gens.push_back(build_step_generator(params, e));

  if (params.mode == Mode::Markovian) {
    set.sub_gates.push_back(make_gate({0, 1, 2}, gens, params.bin_dim, 1.0));
    set.exact = true;
    return set;
  }

  // Group emitters whose slots overlap (transitively) when fusion is enabled.
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t e = 0; e < kNumEmitters; ++e) groups.push_back({e});
  if (params.fuse_shared_slots) {
    bool merged = true;
    while (merged) {
      merged = false;
      for (std::size_t a = 0; a < groups.size() && !merged; ++a)
        for (std::size_t b = a + 1; b < groups.size() && !merged; ++b) {
          std::vector<BinSlot> sa;
          std::vector<BinSlot> sb;
          for (std::size_t e : groups[a]) sa.insert(sa.end(), gens[e].slots.begin(), gens[e].slots.end());
          for (std::size_t e : groups[b]) sb.insert(sb.end(), gens[e].slots.begin(), gens[e].slots.end());
          if (share_slot(sa, sb)) {
            groups[a].insert(groups[a].end(), groups[b].begin(), groups[b].end());
            std::sort(groups[a].begin(), groups[a].end());
            groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(b));
            merged = true;
          }
        }
    }
  }

  std::vector<SubGate> full;
  for (const auto& g : groups) full.push_back(make_gate(g, gens, params.bin_dim, 1.0));
  bool disjoint = true;
  for (std::size_t a = 0; a < full.size(); ++a)
    for (std::size_t b = a + 1; b < full.size(); ++b)
      if (share_slot(full[a].slots, full[b].slots)) disjoint = false;

  if (disjoint || params.trotter == TrotterOrder::First || full.size() == 1) {
    set.sub_gates = std::move(full);
    set.exact = disjoint;
    return set;
  }

  // Symmetric splitting: half steps forward, the last group a full step, half steps back.
  const std::size_t n = groups.size();
  for (std::size_t k = 0; k + 1 < n; ++k) set.sub_gates.push_back(make_gate(groups[k], gens, params.bin_dim, 0.5));
  set.sub_gates.push_back(std::move(full.back()));
  for (std::size_t k = n - 1; k-- > 0;) set.sub_gates.push_back(set.sub_gates[k]);
  set.exact = false;
  return set;
}

JumpOperators markovian_jump_operators(const ModelParams& params) {
  const auto& alg = emitter_algebra();
  const CouplingPhases ph = coupling_phases(params);
  JumpOperators j{Matrix::Zero(kSystemDim, kSystemDim), Matrix::Zero(kSystemDim, kSystemDim)};
  for (std::size_t e = 0; e < kNumEmitters; ++e) {
    const double amp = std::sqrt(params.gamma[e]);
    j.right += amp * std::polar(1.0, ph.right[e]) * alg.sigma12[e];
    j.left += amp * std::polar(1.0, ph.left[e]) * alg.sigma12[e];
  }
  return j;
}

Matrix detuning_hamiltonian(const ModelParams& params) {
  const auto& alg = emitter_algebra();
  return params.delta1 * alg.sigma22[0] + params.delta3 * alg.sigma22[2];
}

}  // namespace wgqed

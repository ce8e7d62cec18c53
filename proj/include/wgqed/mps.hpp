#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wgqed/model.hpp"
#include "wgqed/tensor.hpp"

namespace wgqed {

enum class SiteKind : std::uint8_t { System = 0, LeftBin = 1, RightBin = 2 };

struct SiteLabel {
  SiteKind kind = SiteKind::System;
  std::int64_t index = 0;  ///< time-bin index, unused for the system site

  static SiteLabel system() { return {SiteKind::System, 0}; }
  static SiteLabel bin(Channel channel, std::int64_t index) {
    return {channel == Channel::Right ? SiteKind::RightBin : SiteKind::LeftBin, index};
  }
  friend bool operator==(const SiteLabel& a, const SiteLabel& b) {
    return a.kind == b.kind && (a.kind == SiteKind::System || a.index == b.index);
  }
};

[[nodiscard]] std::string to_string(const SiteLabel& label);

struct GateApplicationReport {
  double discarded_weight = 0.0;
  std::size_t max_bond_after = 1;
};

struct SwapOptions {
  /// Hard bond cap for swaps. Unset means no truncation beyond numerical zeros.
  std::optional<std::size_t> max_bond;
  /// Relative squared weight dropped by swaps; 0 keeps all but numerical zeros.
  double cutoff = 0.0;
};

/// Matrix product state over the system site and the materialized time bins.
///
/// Every site tensor has shape (left bond, physical, right bond). Sites left of
/// the orthogonality center are left isometries, sites right of it are right
/// isometries. The leftmost bond may exceed 1 once finalized bins have been
/// dropped: the discarded prefix is an orthonormal environment basis and never
/// needs to be revisited. The rightmost bond is always 1 (future bins are
/// vacuum and are appended on demand).
class TimeBinMPS {
 public:
  struct Site {
    SiteLabel label;
    ComplexTensor tensor;
  };

  /// Product state: vacuum bins with indices -past_bins .. -1 (left bin before
  /// right bin for each index), then the system site holding `system`. Center
  /// on the system site.
  static TimeBinMPS init_vacuum(std::int64_t past_bins, std::size_t bin_dim, const SystemState& system);

  [[nodiscard]] std::size_t size() const noexcept { return sites_.size(); }
  [[nodiscard]] std::size_t center() const noexcept { return center_; }
  [[nodiscard]] std::size_t bin_dim() const noexcept { return bin_dim_; }
  [[nodiscard]] const Site& site(std::size_t i) const { return sites_.at(i); }
  [[nodiscard]] const SiteLabel& label(std::size_t i) const { return sites_.at(i).label; }
  [[nodiscard]] std::size_t phys_dim(std::size_t i) const { return sites_.at(i).tensor.extent(1); }
  [[nodiscard]] std::optional<std::size_t> position_of(const SiteLabel& label) const;
  [[nodiscard]] std::size_t system_position() const;
  [[nodiscard]] std::size_t max_bond() const;
  /// Bond dimension between sites i and i+1.
  [[nodiscard]] std::size_t bond(std::size_t i) const { return sites_.at(i).tensor.extent(2); }

  /// <psi|psi>, read from the center tensor.
  [[nodiscard]] double norm_squared() const;

  /// Appends a vacuum bin at the right end of the chain.
  void append_vacuum_bin(const SiteLabel& label);

  /// Gauge moves (QR), no truncation.
  void move_center(std::size_t target);

  /// Exchanges sites at left_position and left_position+1. The center must sit on
  /// one of them and follows its tensor to the new position. Returns the
  /// discarded weight (non-zero only if a bond cap was hit).
  double swap_adjacent(std::size_t left_position, SwapOptions options = {});

  /// Applies `gate` (a unitary on the product of the run's physical spaces, in
  /// chain order) to the contiguous run [first, first + count). The center must
  /// be inside the run; it ends on `center_end` (absolute position in the run).
  GateApplicationReport apply_gate(std::size_t first, std::size_t count, const Matrix& gate,
                                   Truncation truncation, std::size_t center_end);

  /// <psi| op_site |psi> / 1 (not normalized); moves the center to `site`.
  [[nodiscard]] cplx expect_local(std::size_t site, const Matrix& op);

  /// Expectations of one operator per listed site without moving the center.
  /// ops[k] acts on sites[k].
  [[nodiscard]] std::vector<cplx> expect_many(std::span<const std::size_t> sites,
                                              std::span<const Matrix> ops) const;

  /// Removes the first `count` sites; they must all lie left of the center.
  void drop_left(std::size_t count);

  /// Largest deviation from the isometry conditions on both flanks.
  [[nodiscard]] double canonical_defect() const;

  /// Full state vector over the chain (site 0 slowest), for small chains only.
  /// The leftmost bond index, if > 1, is kept as the slowest index.
  [[nodiscard]] std::vector<cplx> to_state_vector() const;

  /// Binary checkpoint; see README for the layout.
  void save(std::ostream& out) const;
  static TimeBinMPS load(std::istream& in);

  [[nodiscard]] std::span<const Site> sites() const noexcept { return sites_; }

 private:
  void shift_center_right();
  void shift_center_left();

  std::vector<Site> sites_;
  std::size_t center_ = 0;
  std::size_t bin_dim_ = 3;
};

}  // namespace wgqed

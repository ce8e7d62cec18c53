#include "wgqed/mps.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "wgqed/errors.hpp"

namespace wgqed {

std::string to_string(const SiteLabel& label) {
  switch (label.kind) {
    case SiteKind::System: return "S";
    case SiteKind::LeftBin: return "L" + std::to_string(label.index);
    case SiteKind::RightBin: return "R" + std::to_string(label.index);
  }
  return "?";
}

namespace {

using Index = Eigen::Index;
using MapM = Eigen::Map<Matrix>;
using CMapM = Eigen::Map<const Matrix>;
using StridedMap = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;

Index ix(std::size_t n) { return static_cast<Index>(n); }

// (left bond * phys) x right bond
CMapM left_grouped(const ComplexTensor& t) {
  return {t.data().data(), ix(t.extent(0) * t.extent(1)), ix(t.extent(2))};
}

// left bond x (phys * right bond)
CMapM right_grouped(const ComplexTensor& t) {
  return {t.data().data(), ix(t.extent(0)), ix(t.extent(1) * t.extent(2))};
}

// Slice A[:, s, :] as a left bond x right bond matrix.
StridedMap phys_slice(const ComplexTensor& t, std::size_t s) {
  return {t.data().data() + s * t.extent(2), ix(t.extent(0)), ix(t.extent(2)),
          Eigen::OuterStride<>(ix(t.extent(1) * t.extent(2)))};
}

ComplexTensor site_tensor(const Matrix& m, std::size_t left, std::size_t phys, std::size_t right) {
  return ComplexTensor::from_matrix(m).reshaped({left, phys, right});
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ArgumentError("truncated MPS checkpoint");
  return v;
}

constexpr char kMagic[8] = {'W', 'G', 'Q', 'M', 'P', 'S', '\0', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

TimeBinMPS TimeBinMPS::init_vacuum(std::int64_t past_bins, std::size_t bin_dim, const SystemState& system) {
  if (bin_dim < 2) throw ArgumentError("bin dimension must be >= 2");
  if (past_bins < 0) throw ArgumentError("past bin count must be >= 0");
  double n2 = 0.0;
  for (const auto& a : system) n2 += std::norm(a);
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-12) throw ArgumentError("system amplitudes are not normalized");

  TimeBinMPS mps;
  mps.bin_dim_ = bin_dim;
  ComplexTensor vac({1, bin_dim, 1});
  vac({0, 0, 0}) = 1.0;
  for (std::int64_t k = -past_bins; k < 0; ++k) {
    mps.sites_.push_back({SiteLabel::bin(Channel::Left, k), vac});
    mps.sites_.push_back({SiteLabel::bin(Channel::Right, k), vac});
  }
  ComplexTensor s({1, kSystemDim, 1});
  for (std::size_t i = 0; i < kSystemDim; ++i) s({0, i, 0}) = system[i];
  mps.sites_.push_back({SiteLabel::system(), std::move(s)});
  mps.center_ = mps.sites_.size() - 1;
  return mps;
}

std::optional<std::size_t> TimeBinMPS::position_of(const SiteLabel& label) const {
  for (std::size_t i = 0; i < sites_.size(); ++i)
    if (sites_[i].label == label) return i;
  return std::nullopt;
}

std::size_t TimeBinMPS::system_position() const {
  auto p = position_of(SiteLabel::system());
  if (!p) throw ProtocolError("chain has no system site");
  return *p;
}

std::size_t TimeBinMPS::max_bond() const {
  std::size_t m = 1;
  for (const auto& s : sites_) m = std::max({m, s.tensor.extent(0), s.tensor.extent(2)});
  return m;
}

double TimeBinMPS::norm_squared() const {
  double n = 0.0;
  for (const auto& x : sites_[center_].tensor.data()) n += std::norm(x);
  return n;
}

void TimeBinMPS::append_vacuum_bin(const SiteLabel& label) {
  if (label.kind == SiteKind::System) throw ArgumentError("append_vacuum_bin needs a bin label");
  if (position_of(label)) throw ProtocolError("bin " + to_string(label) + " already materialized");
  if (sites_.back().tensor.extent(2) != 1) throw ProtocolError("right boundary bond must be 1");
  ComplexTensor vac({1, bin_dim_, 1});
  vac({0, 0, 0}) = 1.0;
  sites_.push_back({label, std::move(vac)});
}

void TimeBinMPS::shift_center_right() {
  auto& a = sites_[center_].tensor;
  auto& b = sites_[center_ + 1].tensor;
  const std::size_t chi_l = a.extent(0);
  const std::size_t d = a.extent(1);
  MatrixQr qr = thin_qr(left_grouped(a));
  const auto k = static_cast<std::size_t>(qr.q.cols());
  Matrix next = structured_product(qr.r, right_grouped(b));
  const std::size_t d_b = b.extent(1);
  const std::size_t chi_r = b.extent(2);
  a = site_tensor(qr.q, chi_l, d, k);
  b = site_tensor(next, k, d_b, chi_r);
  ++center_;
}

void TimeBinMPS::shift_center_left() {
  auto& a = sites_[center_].tensor;
  auto& prev = sites_[center_ - 1].tensor;
  const std::size_t d = a.extent(1);
  const std::size_t chi_r = a.extent(2);
  MatrixQr qr = thin_qr(right_grouped(a).adjoint());
  const auto k = static_cast<std::size_t>(qr.q.cols());
  Matrix before = structured_product(left_grouped(prev), qr.r.adjoint());
  const std::size_t chi_l_prev = prev.extent(0);
  const std::size_t d_prev = prev.extent(1);
  a = site_tensor(qr.q.adjoint(), k, d, chi_r);
  prev = site_tensor(before, chi_l_prev, d_prev, k);
  --center_;
}

void TimeBinMPS::move_center(std::size_t target) {
  if (target >= sites_.size()) throw ArgumentError("move_center: target out of range");
  while (center_ < target) shift_center_right();
  while (center_ > target) shift_center_left();
}

double TimeBinMPS::swap_adjacent(std::size_t left_position, SwapOptions options) {
  const std::size_t i = left_position;
  const std::size_t j = i + 1;
  if (j >= sites_.size()) throw ArgumentError("swap_adjacent: position out of range");
  if (center_ != i && center_ != j)
    throw ProtocolError("swap_adjacent: center at " + std::to_string(center_) + " is not on the pair (" +
                        std::to_string(i) + ", " + std::to_string(j) + ")");
  const auto& a = sites_[i].tensor;
  const auto& b = sites_[j].tensor;
  const std::size_t chi_l = a.extent(0);
  const std::size_t d1 = a.extent(1);
  const std::size_t d2 = b.extent(1);
  const std::size_t chi_r = b.extent(2);

  const Matrix theta = structured_product(left_grouped(a), right_grouped(b));  // (chi_l d1) x (d2 chi_r)
  // Reorder to (chi_l d2) x (d1 chi_r).
  Matrix swapped(ix(chi_l * d2), ix(d1 * chi_r));
  for (std::size_t l = 0; l < chi_l; ++l)
    for (std::size_t s1 = 0; s1 < d1; ++s1)
      for (std::size_t s2 = 0; s2 < d2; ++s2)
        swapped.block(ix(l * d2 + s2), ix(s1 * chi_r), 1, ix(chi_r)) =
            theta.block(ix(l * d1 + s1), ix(s2 * chi_r), 1, ix(chi_r));

  Truncation trunc;
  trunc.max_bond = options.max_bond.value_or(std::numeric_limits<std::size_t>::max());
  trunc.cutoff = options.cutoff;
  MatrixSvd svd = truncated_svd(swapped, trunc);
  const auto k = static_cast<std::size_t>(svd.s.size());

  const bool follow_right = center_ == i;
  Matrix left = svd.u;
  Matrix right = svd.vh;
  if (follow_right)
    right = svd.s.cast<cplx>().asDiagonal() * right;
  else
    left = left * svd.s.cast<cplx>().asDiagonal();
  sites_[i].tensor = site_tensor(left, chi_l, d2, k);
  sites_[j].tensor = site_tensor(right, k, d1, chi_r);
  std::swap(sites_[i].label, sites_[j].label);
  center_ = follow_right ? j : i;
  return svd.discarded_weight;
}

GateApplicationReport TimeBinMPS::apply_gate(std::size_t first, std::size_t count, const Matrix& gate,
                                             Truncation truncation, std::size_t center_end) {
  if (count == 0 || first + count > sites_.size()) throw ArgumentError("apply_gate: run out of range");
  if (center_ < first || center_ >= first + count) throw ProtocolError("apply_gate: center outside the run");
  if (center_end < first || center_end >= first + count) throw ArgumentError("apply_gate: center_end outside the run");
  std::size_t dim = 1;
  for (std::size_t k = 0; k < count; ++k) dim *= phys_dim(first + k);
  if (gate.rows() != ix(dim) || gate.cols() != ix(dim))
    throw ArgumentError("apply_gate: gate dimension " + std::to_string(gate.rows()) +
                        " does not match run dimension " + std::to_string(dim));

  const std::size_t chi_l = sites_[first].tensor.extent(0);
  const std::size_t chi_r = sites_[first + count - 1].tensor.extent(2);

  // theta: (chi_l * d_1 * ... * d_k) x chi_r
  Matrix theta = left_grouped(sites_[first].tensor);
  for (std::size_t k = 1; k < count; ++k) {
    const auto& t = sites_[first + k].tensor;
    Matrix next = structured_product(theta, right_grouped(t));  // rows x (d chi')
    theta = CMapM(next.data(), next.rows() * ix(t.extent(1)), ix(t.extent(2)));
  }
  // Apply the gate on the physical index: regroup theta as dim x (chi_l chi_r).
  Matrix phys_major(ix(dim), ix(chi_l * chi_r));
  for (std::size_t a = 0; a < chi_l; ++a)
    phys_major.middleCols(ix(a * chi_r), ix(chi_r)) = theta.middleRows(ix(a * dim), ix(dim));
  const Matrix applied = structured_product(gate, phys_major);
  Matrix updated(theta.rows(), theta.cols());
  for (std::size_t a = 0; a < chi_l; ++a)
    updated.middleRows(ix(a * dim), ix(dim)) = applied.middleCols(ix(a * chi_r), ix(chi_r));

  GateApplicationReport report;
  std::size_t left_bond = chi_l;
  std::size_t rest_phys = dim;
  Matrix remaining = std::move(updated);  // logically (left_bond * rest_phys) x chi_r
  for (std::size_t k = 0; k + 1 < count; ++k) {
    const std::size_t d = phys_dim(first + k);
    rest_phys /= d;
    CMapM m(remaining.data(), ix(left_bond * d), ix(rest_phys * chi_r));
    MatrixSvd svd = truncated_svd(m, truncation);
    const auto kept = static_cast<std::size_t>(svd.s.size());
    report.discarded_weight += svd.discarded_weight;
    sites_[first + k].tensor = site_tensor(svd.u, left_bond, d, kept);
    remaining = svd.s.cast<cplx>().asDiagonal() * svd.vh;
    left_bond = kept;
  }
  const std::size_t last = first + count - 1;
  sites_[last].tensor = site_tensor(remaining, left_bond, phys_dim(last), chi_r);
  center_ = last;
  move_center(center_end);

  for (std::size_t k = first; k + 1 < first + count; ++k)
    report.max_bond_after = std::max(report.max_bond_after, bond(k));
  return report;
}

cplx TimeBinMPS::expect_local(std::size_t site, const Matrix& op) {
  if (site >= sites_.size()) throw ArgumentError("expect_local: site out of range");
  if (op.rows() != ix(phys_dim(site)) || op.cols() != op.rows())
    throw ArgumentError("expect_local: operator dimension does not match site");
  move_center(site);
  const auto& c = sites_[site].tensor;
  cplx val{0.0};
  for (std::size_t s = 0; s < c.extent(1); ++s)
    for (std::size_t t = 0; t < c.extent(1); ++t) {
      const cplx o = op(ix(s), ix(t));
      if (o == cplx{0.0}) continue;
      val += o * (phys_slice(c, s).conjugate().cwiseProduct(phys_slice(c, t))).sum();
    }
  return val;
}

std::vector<cplx> TimeBinMPS::expect_many(std::span<const std::size_t> sites, std::span<const Matrix> ops) const {
  if (sites.size() != ops.size()) throw ArgumentError("expect_many: one operator per site required");
  for (std::size_t k = 0; k < sites.size(); ++k) {
    if (sites[k] >= sites_.size()) throw ArgumentError("expect_many: site out of range");
    if (ops[k].rows() != ix(phys_dim(sites[k])) || ops[k].cols() != ops[k].rows())
      throw ArgumentError("expect_many: operator dimension does not match site");
  }
  std::vector<cplx> out(sites.size(), cplx{0.0});
  std::size_t lo = center_;
  std::size_t hi = center_;
  for (std::size_t s : sites) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  // Group requests per site.
  std::vector<std::vector<std::size_t>> requests(sites_.size());
  for (std::size_t k = 0; k < sites.size(); ++k) requests[sites[k]].push_back(k);

  auto local = [&](const ComplexTensor& t, const Matrix& op, auto&& contraction) {
    cplx v{0.0};
    for (std::size_t s = 0; s < t.extent(1); ++s)
      for (std::size_t u = 0; u < t.extent(1); ++u) {
        const cplx o = op(ix(s), ix(u));
        if (o != cplx{0.0}) v += o * contraction(s, u);
      }
    return v;
  };

  const auto& c = sites_[center_].tensor;
  for (std::size_t k : requests[center_])
    out[k] = local(c, ops[k], [&](std::size_t s, std::size_t u) {
      return (phys_slice(c, s).conjugate().cwiseProduct(phys_slice(c, u))).sum();
    });

  // Left flank: G[b, b'] = <b|b'> on the right bond of the current site.
  if (lo < center_) {
    const Matrix cm = right_grouped(c);
    Matrix g = cm.conjugate() * cm.transpose();
    for (std::size_t i = center_; i-- > lo;) {
      const auto& a = sites_[i].tensor;
      for (std::size_t k : requests[i])
        out[k] = local(a, ops[k], [&](std::size_t s, std::size_t u) {
          return (phys_slice(a, s).conjugate() * g * phys_slice(a, u).transpose()).trace();
        });
      if (i > lo) {
        Matrix next = Matrix::Zero(ix(a.extent(0)), ix(a.extent(0)));
        for (std::size_t s = 0; s < a.extent(1); ++s)
          next += structured_product(phys_slice(a, s).conjugate(), structured_product(g, phys_slice(a, s).transpose()));
        g = std::move(next);
      }
    }
  }
  // Right flank: L[a, a'] on the left bond of the current site.
  if (hi > center_) {
    const Matrix cm = left_grouped(c);
    Matrix l = cm.adjoint() * cm;
    for (std::size_t i = center_ + 1; i <= hi; ++i) {
      const auto& a = sites_[i].tensor;
      for (std::size_t k : requests[i])
        out[k] = local(a, ops[k], [&](std::size_t s, std::size_t u) {
          return (phys_slice(a, s).adjoint() * l * phys_slice(a, u)).trace();
        });
      if (i < hi) {
        Matrix next = Matrix::Zero(ix(a.extent(2)), ix(a.extent(2)));
        for (std::size_t s = 0; s < a.extent(1); ++s)
          next += structured_product(phys_slice(a, s).adjoint(), structured_product(l, phys_slice(a, s)));
        l = std::move(next);
      }
    }
  }
  return out;
}

void TimeBinMPS::drop_left(std::size_t count) {
  if (count == 0) return;
  if (count > center_) throw ProtocolError("drop_left: cannot drop the center or sites right of it");
  sites_.erase(sites_.begin(), sites_.begin() + static_cast<std::ptrdiff_t>(count));
  center_ -= count;
}

double TimeBinMPS::canonical_defect() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    if (i == center_) continue;
    const auto& t = sites_[i].tensor;
    Matrix gram;
    if (i < center_) {
      const Matrix m = left_grouped(t);
      gram = m.adjoint() * m;
    } else {
      const Matrix m = right_grouped(t);
      gram = m * m.adjoint();
    }
    gram -= Matrix::Identity(gram.rows(), gram.cols());
    worst = std::max(worst, gram.cwiseAbs().maxCoeff());
  }
  return worst;
}

std::vector<cplx> TimeBinMPS::to_state_vector() const {
  Matrix theta = left_grouped(sites_[0].tensor);
  for (std::size_t k = 1; k < sites_.size(); ++k) {
    const auto& t = sites_[k].tensor;
    Matrix next = theta * right_grouped(t);
    theta = CMapM(next.data(), next.rows() * ix(t.extent(1)), ix(t.extent(2)));
  }
  // Right boundary bond is 1.
  return {theta.data(), theta.data() + theta.size()};
}

void TimeBinMPS::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kFormatVersion);
  write_pod(out, static_cast<std::uint64_t>(bin_dim_));
  write_pod(out, static_cast<std::uint64_t>(sites_.size()));
  write_pod(out, static_cast<std::uint64_t>(center_));
  for (const auto& s : sites_) {
    write_pod(out, static_cast<std::uint8_t>(s.label.kind));
    write_pod(out, static_cast<std::int64_t>(s.label.index));
    for (std::size_t a = 0; a < 3; ++a) write_pod(out, static_cast<std::uint64_t>(s.tensor.extent(a)));
    for (const auto& x : s.tensor.data()) {
      write_pod(out, x.real());
      write_pod(out, x.imag());
    }
  }
}

TimeBinMPS TimeBinMPS::load(std::istream& in) {
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ArgumentError("not an MPS checkpoint");
  if (read_pod<std::uint32_t>(in) != kFormatVersion) throw ArgumentError("unsupported MPS checkpoint version");
  TimeBinMPS mps;
  mps.bin_dim_ = read_pod<std::uint64_t>(in);
  const auto n = read_pod<std::uint64_t>(in);
  mps.center_ = read_pod<std::uint64_t>(in);
  if (n == 0 || mps.center_ >= n) throw ArgumentError("corrupt MPS checkpoint header");
  for (std::uint64_t k = 0; k < n; ++k) {
    Site s;
    const auto kind = read_pod<std::uint8_t>(in);
    if (kind > 2) throw ArgumentError("corrupt site kind in MPS checkpoint");
    s.label.kind = static_cast<SiteKind>(kind);
    s.label.index = read_pod<std::int64_t>(in);
    Shape shape(3);
    for (auto& e : shape) e = read_pod<std::uint64_t>(in);
    s.tensor = ComplexTensor(shape);
    for (auto& x : s.tensor.data()) {
      const double re = read_pod<double>(in);
      const double im = read_pod<double>(in);
      x = {re, im};
    }
    if (!mps.sites_.empty() && mps.sites_.back().tensor.extent(2) != s.tensor.extent(0))
      throw ArgumentError("bond mismatch in MPS checkpoint");
    mps.sites_.push_back(std::move(s));
  }
  return mps;
}

}  // namespace wgqed

#include "wgqed/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#define LAPACK_COMPLEX_CPP
#include <lapacke.h>

#include "wgqed/errors.hpp"

namespace wgqed {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape needs at least one axis");
  if (std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end())
    throw DimensionError("tensor extents must be positive");
}

Shape strides_of(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

struct ThinSvd {
  Eigen::MatrixXcd u;
  Eigen::VectorXd s;
  Eigen::MatrixXcd vh;
};

// Divide-and-conquer LAPACK driver, QR-iteration driver as fallback.
ThinSvd lapack_svd(const Matrix& m) {
  const auto rows = static_cast<lapack_int>(m.rows());
  const auto cols = static_cast<lapack_int>(m.cols());
  const lapack_int k = std::min(rows, cols);
  ThinSvd out;
  out.s.resize(k);
  out.u.resize(rows, k);
  out.vh.resize(k, cols);
  auto z = [](Eigen::MatrixXcd& x) { return reinterpret_cast<lapack_complex_double*>(x.data()); };
  Eigen::MatrixXcd a = m;
  lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'S', rows, cols, z(a), rows, out.s.data(), z(out.u), rows,
                                   z(out.vh), k);
  if (info > 0) {
    a = m;
    Eigen::VectorXd superb(std::max<lapack_int>(k - 1, 1));
    info = LAPACKE_zgesvd(LAPACK_COL_MAJOR, 'S', 'S', rows, cols, z(a), rows, out.s.data(), z(out.u), rows,
                          z(out.vh), k, superb.data());
  }
  if (info != 0) throw DecompositionError("SVD did not converge (LAPACK info " + std::to_string(info) + ")");
  return out;
}

}  // namespace

ComplexTensor::ComplexTensor() : shape_{1}, data_(1, cplx{0.0}) {}

ComplexTensor::ComplexTensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(product(shape_), cplx{0.0});
}

ComplexTensor::ComplexTensor(Shape shape, std::vector<cplx> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != product(shape_))
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape product " + std::to_string(product(shape_)));
}

ComplexTensor ComplexTensor::from_matrix(const Matrix& m) {
  std::vector<cplx> data(m.data(), m.data() + m.size());
  return ComplexTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                       std::move(data));
}

ComplexTensor ComplexTensor::identity(std::size_t n) {
  ComplexTensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

std::size_t ComplexTensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index rank does not match tensor rank");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw DimensionError("index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

cplx& ComplexTensor::operator()(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

const cplx& ComplexTensor::operator()(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

ComplexTensor ComplexTensor::reshaped(Shape shape) const& {
  return ComplexTensor(std::move(shape), data_);
}

ComplexTensor ComplexTensor::reshaped(Shape shape) && {
  return ComplexTensor(std::move(shape), std::move(data_));
}

Matrix ComplexTensor::to_matrix() const {
  if (rank() != 2) throw DimensionError("to_matrix needs a rank-2 tensor");
  return Eigen::Map<const Matrix>(data_.data(), static_cast<Eigen::Index>(shape_[0]),
                                  static_cast<Eigen::Index>(shape_[1]));
}

ComplexTensor& ComplexTensor::operator*=(cplx factor) {
  for (auto& x : data_) x *= factor;
  return *this;
}

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("max_abs_diff: shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double norm(const ComplexTensor& t) {
  double s = 0.0;
  for (const auto& x : t.data()) s += std::norm(x);
  return std::sqrt(s);
}

ComplexTensor permute(const ComplexTensor& t, std::span<const std::size_t> perm) {
  const std::size_t r = t.rank();
  if (perm.size() != r) throw ArgumentError("permutation length does not match rank");
  std::vector<bool> seen(r, false);
  for (std::size_t p : perm) {
    if (p >= r || seen[p]) throw ArgumentError("invalid axis permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = t.shape()[perm[i]];
  ComplexTensor out(out_shape);
  if (std::is_sorted(perm.begin(), perm.end())) {
    std::copy(t.data().begin(), t.data().end(), out.data().begin());
    return out;
  }

  // Walk the output in order while tracking the source offset.
  const Shape src_strides = strides_of(t.shape());
  Shape step(r);
  for (std::size_t i = 0; i < r; ++i) step[i] = src_strides[perm[i]];
  Shape counter(r, 0);
  std::size_t src = 0;
  auto in = t.data();
  auto dst = out.data();
  for (std::size_t k = 0; k < out.size(); ++k) {
    dst[k] = in[src];
    for (std::size_t axis = r; axis-- > 0;) {
      if (++counter[axis] < out_shape[axis]) {
        src += step[axis];
        break;
      }
      src -= step[axis] * (out_shape[axis] - 1);
      counter[axis] = 0;
    }
  }
  return out;
}

ComplexTensor contract(const ComplexTensor& a, const ComplexTensor& b,
                       std::span<const std::pair<std::size_t, std::size_t>> axis_pairs) {
  std::vector<bool> used_a(a.rank(), false);
  std::vector<bool> used_b(b.rank(), false);
  for (auto [ia, ib] : axis_pairs) {
    if (ia >= a.rank() || ib >= b.rank()) throw ArgumentError("contract: axis out of range");
    if (used_a[ia] || used_b[ib]) throw ArgumentError("contract: repeated axis in pairs");
    used_a[ia] = used_b[ib] = true;
    if (a.shape()[ia] != b.shape()[ib])
      throw DimensionError("contract: paired extents differ (" + std::to_string(a.shape()[ia]) +
                           " vs " + std::to_string(b.shape()[ib]) + ")");
  }

  std::vector<std::size_t> perm_a;
  std::vector<std::size_t> perm_b;
  Shape out_shape;
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (!used_a[i]) {
      perm_a.push_back(i);
      out_shape.push_back(a.shape()[i]);
      rows *= a.shape()[i];
    }
  for (auto [ia, ib] : axis_pairs) {
    perm_a.push_back(ia);
    perm_b.push_back(ib);
    inner *= a.shape()[ia];
  }
  for (std::size_t i = 0; i < b.rank(); ++i)
    if (!used_b[i]) {
      perm_b.push_back(i);
      out_shape.push_back(b.shape()[i]);
      cols *= b.shape()[i];
    }
  if (out_shape.empty()) out_shape.push_back(1);

  const ComplexTensor ap = permute(a, perm_a);
  const ComplexTensor bp = permute(b, perm_b);
  Eigen::Map<const Matrix> ma(ap.data().data(), static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(inner));
  Eigen::Map<const Matrix> mb(bp.data().data(), static_cast<Eigen::Index>(inner),
                              static_cast<Eigen::Index>(cols));
  ComplexTensor out(out_shape);
  Eigen::Map<Matrix> mo(out.data().data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
  mo.noalias() = ma * mb;
  return out;
}

ComplexTensor contract(const ComplexTensor& a, const ComplexTensor& b,
                       std::initializer_list<std::pair<std::size_t, std::size_t>> axis_pairs) {
  return contract(a, b, std::span<const std::pair<std::size_t, std::size_t>>(axis_pairs.begin(),
                                                                               axis_pairs.size()));
}

namespace {

struct Block {
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::Index> cols;
};

// Connected components of the bipartite row/column graph of nonzero entries.
// All-zero rows and columns belong to no block.
std::vector<Block> nonzero_blocks(const Matrix& m) {
  const Eigen::Index nr = m.rows();
  const Eigen::Index nc = m.cols();
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(nr + nc));
  std::iota(parent.begin(), parent.end(), Eigen::Index{0});
  auto find = [&](Eigen::Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      auto& px = parent[static_cast<std::size_t>(x)];
      px = parent[static_cast<std::size_t>(px)];
      x = px;
    }
    return x;
  };
  std::vector<bool> row_used(static_cast<std::size_t>(nr), false);
  std::vector<bool> col_used(static_cast<std::size_t>(nc), false);
  for (Eigen::Index i = 0; i < nr; ++i) {
    Eigen::Index root = -1;
    for (Eigen::Index j = 0; j < nc; ++j) {
      if (m(i, j) == cplx{0.0}) continue;
      row_used[static_cast<std::size_t>(i)] = true;
      col_used[static_cast<std::size_t>(j)] = true;
      const Eigen::Index cj = find(nr + j);
      if (root < 0) root = find(i);
      if (cj != root) parent[static_cast<std::size_t>(cj)] = root;
    }
  }
  std::vector<Block> blocks;
  std::vector<Eigen::Index> block_of(static_cast<std::size_t>(nr + nc), -1);
  auto block_for = [&](Eigen::Index node) -> Block& {
    auto& b = block_of[static_cast<std::size_t>(find(node))];
    if (b < 0) {
      b = static_cast<Eigen::Index>(blocks.size());
      blocks.emplace_back();
    }
    return blocks[static_cast<std::size_t>(b)];
  };
  for (Eigen::Index i = 0; i < nr; ++i)
    if (row_used[static_cast<std::size_t>(i)]) block_for(i).rows.push_back(i);
  for (Eigen::Index j = 0; j < nc; ++j)
    if (col_used[static_cast<std::size_t>(j)]) block_for(nr + j).cols.push_back(j);
  return blocks;
}

}  // namespace

MatrixSvd truncated_svd(const Matrix& m, Truncation truncation) {
  if (!m.allFinite()) throw DecompositionError("SVD input contains non-finite values");
  const std::vector<Block> blocks = nonzero_blocks(m);
  std::vector<ThinSvd> parts;
  parts.reserve(blocks.size());
  // (singular value, block, column within block)
  std::vector<std::tuple<double, std::size_t, Eigen::Index>> values;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    parts.push_back(lapack_svd(m(blocks[b].rows, blocks[b].cols)));
    for (Eigen::Index k = 0; k < parts.back().s.size(); ++k) values.emplace_back(parts.back().s[k], b, k);
  }
  std::stable_sort(values.begin(), values.end(),
                   [](const auto& x, const auto& y) { return std::get<0>(x) > std::get<0>(y); });

  double total = 0.0;
  for (const auto& v : values) total += std::get<0>(v) * std::get<0>(v);
  const double threshold = std::max(truncation.cutoff, kNumericalZeroWeight);
  std::size_t keep = 0;
  if (total > 0.0)
    while (keep < values.size() && std::get<0>(values[keep]) * std::get<0>(values[keep]) / total >= threshold) ++keep;
  keep = std::min(keep, std::max<std::size_t>(truncation.max_bond, 1));

  MatrixSvd out;
  if (keep == 0) {
    // Zero matrix: a single zero singular value with unit placeholder vectors.
    out.u = Matrix::Zero(m.rows(), 1);
    out.u(0, 0) = 1.0;
    out.s = Eigen::VectorXd::Zero(1);
    out.vh = Matrix::Zero(1, m.cols());
    out.vh(0, 0) = 1.0;
    return out;
  }
  out.u = Matrix::Zero(m.rows(), static_cast<Eigen::Index>(keep));
  out.s.resize(static_cast<Eigen::Index>(keep));
  out.vh = Matrix::Zero(static_cast<Eigen::Index>(keep), m.cols());
  double kept = 0.0;
  for (std::size_t c = 0; c < keep; ++c) {
    const auto& [sv, b, k] = values[c];
    const auto col = static_cast<Eigen::Index>(c);
    out.s[col] = sv;
    kept += sv * sv;
    const auto& blk = blocks[b];
    for (std::size_t r = 0; r < blk.rows.size(); ++r) out.u(blk.rows[r], col) = parts[b].u(static_cast<Eigen::Index>(r), k);
    for (std::size_t r = 0; r < blk.cols.size(); ++r) out.vh(col, blk.cols[r]) = parts[b].vh(k, static_cast<Eigen::Index>(r));
  }
  out.discarded_weight = total > 0.0 ? std::max(0.0, (total - kept) / total) : 0.0;
  return out;
}

Matrix structured_product(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  using Index = Eigen::Index;
  const Index n = a.rows();
  const Index inner = a.cols();
  const Index m = b.cols();
  if (b.rows() != inner) throw DimensionError("structured_product: inner dimensions differ");
  Matrix c = Matrix::Zero(n, m);
  const double dense_cost = static_cast<double>(n) * static_cast<double>(inner) * static_cast<double>(m);
  if (dense_cost < 32768.0) {
    c.noalias() = a * b;
    return c;
  }

  // Contraction indices with equal row pattern in a and column pattern in b
  // form one group; hash collisions only merge groups.
  const auto k_count = static_cast<std::size_t>(inner);
  std::vector<std::uint64_t> ha(k_count, 0);
  std::vector<std::uint64_t> hb(k_count, 0);
  constexpr std::uint64_t kMul = 0x9E3779B97F4A7C15ull;
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < inner; ++k)
      if (a(i, k) != cplx{0.0}) ha[static_cast<std::size_t>(k)] = (ha[static_cast<std::size_t>(k)] ^ static_cast<std::uint64_t>(i + 1)) * kMul;
  for (Index k = 0; k < inner; ++k)
    for (Index j = 0; j < m; ++j)
      if (b(k, j) != cplx{0.0}) hb[static_cast<std::size_t>(k)] = (hb[static_cast<std::size_t>(k)] ^ static_cast<std::uint64_t>(j + 1)) * kMul;

  std::vector<std::uint64_t> keys;
  std::vector<std::vector<Index>> group_k;
  std::vector<int> group_of(k_count, -1);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (ha[k] == 0 || hb[k] == 0) continue;
    const std::uint64_t key = ha[k] * 31 + hb[k];
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      group_k.emplace_back();
      it = keys.end() - 1;
    }
    const auto g = static_cast<int>(it - keys.begin());
    group_of[k] = g;
    group_k[static_cast<std::size_t>(g)].push_back(static_cast<Index>(k));
  }
  if (group_k.empty()) return c;

  const std::size_t groups = group_k.size();
  std::vector<std::vector<char>> row_mask(groups, std::vector<char>(static_cast<std::size_t>(n), 0));
  std::vector<std::vector<char>> col_mask(groups, std::vector<char>(static_cast<std::size_t>(m), 0));
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < inner; ++k)
      if (const int g = group_of[static_cast<std::size_t>(k)]; g >= 0 && a(i, k) != cplx{0.0})
        row_mask[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)] = 1;
  for (Index k = 0; k < inner; ++k)
    if (const int g = group_of[static_cast<std::size_t>(k)]; g >= 0)
      for (Index j = 0; j < m; ++j)
        if (b(k, j) != cplx{0.0}) col_mask[static_cast<std::size_t>(g)][static_cast<std::size_t>(j)] = 1;

  std::vector<std::vector<Index>> rows(groups);
  std::vector<std::vector<Index>> cols(groups);
  double block_cost = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (Index i = 0; i < n; ++i)
      if (row_mask[g][static_cast<std::size_t>(i)]) rows[g].push_back(i);
    for (Index j = 0; j < m; ++j)
      if (col_mask[g][static_cast<std::size_t>(j)]) cols[g].push_back(j);
    block_cost += static_cast<double>(rows[g].size()) * static_cast<double>(group_k[g].size()) *
                  static_cast<double>(cols[g].size());
  }
  if (block_cost > 0.5 * dense_cost) {
    c.noalias() = a * b;
    return c;
  }
  for (std::size_t g = 0; g < groups; ++g) {
    const Matrix sub = a(rows[g], group_k[g]) * b(group_k[g], cols[g]);
    c(rows[g], cols[g]) += sub;
  }
  return c;
}

MatrixQr thin_qr(const Matrix& m) {
  const std::vector<Block> blocks = nonzero_blocks(m);
  Eigen::Index k_total = 0;
  for (const auto& b : blocks)
    k_total += std::min(static_cast<Eigen::Index>(b.rows.size()), static_cast<Eigen::Index>(b.cols.size()));
  MatrixQr out;
  if (k_total == 0) {
    out.q = Matrix::Zero(m.rows(), 1);
    out.q(0, 0) = 1.0;
    out.r = Matrix::Zero(1, m.cols());
    return out;
  }
  out.q = Matrix::Zero(m.rows(), k_total);
  out.r = Matrix::Zero(k_total, m.cols());
  Eigen::Index offset = 0;
  for (const auto& b : blocks) {
    const Eigen::MatrixXcd sub = m(b.rows, b.cols);
    const Eigen::Index k = std::min(sub.rows(), sub.cols());
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(sub);
    const Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(sub.rows(), k);
    const Eigen::MatrixXcd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (std::size_t i = 0; i < b.rows.size(); ++i) out.q.row(b.rows[i]).segment(offset, k) = q.row(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < b.cols.size(); ++j) out.r.col(b.cols[j]).segment(offset, k) = r.col(static_cast<Eigen::Index>(j));
    offset += k;
  }
  return out;
}

SvdResult svd_split(const ComplexTensor& t, std::span<const std::size_t> left_axes,
                    Truncation truncation) {
  const std::size_t r = t.rank();
  if (left_axes.empty() || left_axes.size() >= r)
    throw ArgumentError("svd_split: left axes must be a nonempty proper subset");
  std::vector<bool> is_left(r, false);
  for (std::size_t a : left_axes) {
    if (a >= r || is_left[a]) throw ArgumentError("svd_split: invalid left axis set");
    is_left[a] = true;
  }
  std::vector<std::size_t> perm(left_axes.begin(), left_axes.end());
  Shape left_shape;
  Shape right_shape;
  std::size_t rows = 1;
  for (std::size_t a : left_axes) {
    left_shape.push_back(t.shape()[a]);
    rows *= t.shape()[a];
  }
  for (std::size_t a = 0; a < r; ++a)
    if (!is_left[a]) {
      perm.push_back(a);
      right_shape.push_back(t.shape()[a]);
    }
  const ComplexTensor tp = permute(t, perm);
  const std::size_t cols = tp.size() / rows;
  Eigen::Map<const Matrix> m(tp.data().data(), static_cast<Eigen::Index>(rows),
                             static_cast<Eigen::Index>(cols));
  MatrixSvd svd = truncated_svd(m, truncation);

  const auto k = static_cast<std::size_t>(svd.s.size());
  left_shape.push_back(k);
  right_shape.insert(right_shape.begin(), k);
  SvdResult out;
  out.left = ComplexTensor::from_matrix(svd.u).reshaped(left_shape);
  out.right = ComplexTensor::from_matrix(svd.vh).reshaped(right_shape);
  out.singular_values.assign(svd.s.data(), svd.s.data() + k);
  out.discarded_weight = svd.discarded_weight;
  return out;
}

Matrix exponentiate_generator(const Matrix& h, double prefactor) {
  if (h.rows() != h.cols()) throw ArgumentError("generator must be square");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  const double asym = (h - h.adjoint()).cwiseAbs().maxCoeff();
  if (asym > kHermitianTolerance * scale)
    throw ArgumentError("generator is not Hermitian (max |h - h^dagger| = " + std::to_string(asym) + ")");
  const Eigen::MatrixXcd sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(sym);
  if (eig.info() != Eigen::Success) throw DecompositionError("eigendecomposition did not converge");
  const Eigen::VectorXcd phases =
      (eig.eigenvalues().cast<cplx>() * cplx(0.0, -prefactor)).array().exp().matrix();
  return eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint();
}

ComplexTensor exponentiate_generator(const ComplexTensor& h, double prefactor) {
  if (h.rank() != 2) throw ArgumentError("generator must be a rank-2 tensor");
  return ComplexTensor::from_matrix(exponentiate_generator(h.to_matrix(), prefactor));
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace wgqed

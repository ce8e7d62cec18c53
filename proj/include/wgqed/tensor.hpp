#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace wgqed {

using cplx = std::complex<double>;
using Matrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<std::size_t>;

/// Dense complex array of arbitrary rank.
///
/// Layout: row-major (the last axis varies fastest). For shape (n0, n1, ..., nk)
/// the element (i0, i1, ..., ik) lives at offset ((i0*n1 + i1)*n2 + ...)*nk + ik.
/// Every module relies on this: reshaping never moves data, and a rank-2 tensor
/// of shape (r, c) is bitwise a row-major r x c matrix.
class ComplexTensor {
 public:
  ComplexTensor();
  explicit ComplexTensor(Shape shape);
  ComplexTensor(Shape shape, std::vector<cplx> data);

  static ComplexTensor from_matrix(const Matrix& m);
  static ComplexTensor identity(std::size_t n);

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

  [[nodiscard]] std::span<cplx> data() noexcept { return data_; }
  [[nodiscard]] std::span<const cplx> data() const noexcept { return data_; }

  cplx& operator()(std::initializer_list<std::size_t> index);
  const cplx& operator()(std::initializer_list<std::size_t> index) const;

  /// Same data, new shape. Throws DimensionError if the element count differs.
  [[nodiscard]] ComplexTensor reshaped(Shape shape) const&;
  [[nodiscard]] ComplexTensor reshaped(Shape shape) &&;

  /// Rank-2 view as an Eigen matrix (copy).
  [[nodiscard]] Matrix to_matrix() const;

  ComplexTensor& operator*=(cplx factor);
  friend ComplexTensor operator*(cplx factor, ComplexTensor t) { return t *= factor; }

 private:
  [[nodiscard]] std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<cplx> data_;
};

[[nodiscard]] double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b);
[[nodiscard]] double norm(const ComplexTensor& t);

/// Axis i of the result is axis perm[i] of t.
[[nodiscard]] ComplexTensor permute(const ComplexTensor& t, std::span<const std::size_t> perm);

/// Contracts paired axes. Free axes of a come first, then free axes of b, each in
/// their original order.
[[nodiscard]] ComplexTensor contract(const ComplexTensor& a, const ComplexTensor& b,
                                     std::span<const std::pair<std::size_t, std::size_t>> axis_pairs);
[[nodiscard]] ComplexTensor contract(const ComplexTensor& a, const ComplexTensor& b,
                                     std::initializer_list<std::pair<std::size_t, std::size_t>> axis_pairs);

struct SvdResult {
  ComplexTensor left;   ///< shape (left extents..., k), a left isometry
  std::vector<double> singular_values;  ///< descending, length k
  ComplexTensor right;  ///< shape (k, right extents...), a right isometry
  double discarded_weight = 0.0;  ///< dropped sum s^2 / total sum s^2
};

struct Truncation {
  std::size_t max_bond = 128;
  /// Relative squared weight s_i^2 / sum s^2 below which a value is dropped.
  double cutoff = 1e-12;
};

/// Singular values whose relative squared weight is below this are always
/// dropped: they carry no representable amplitude in double precision.
inline constexpr double kNumericalZeroWeight = 1e-28;

/// Splits t into left * diag(s) * right with the listed axes on the left (in the
/// given order) and the remaining axes on the right (in original order).
[[nodiscard]] SvdResult svd_split(const ComplexTensor& t, std::span<const std::size_t> left_axes,
                                  Truncation truncation);

/// Matrix-level SVD used by the MPS engine. The returned factors satisfy
/// m ~= u * s.asDiagonal() * vh.
///
/// The nonzero pattern of m is split into independent blocks (connected
/// components of rows and columns sharing a nonzero entry) and each block is
/// decomposed on its own. For matrices that conserve a quantum number this is
/// the symmetry-sector decomposition; the factors keep exact zeros outside the
/// blocks. Singular values are returned in descending order.
struct MatrixSvd {
  Matrix u;
  Eigen::VectorXd s;
  Matrix vh;
  double discarded_weight = 0.0;
};
[[nodiscard]] MatrixSvd truncated_svd(const Matrix& m, Truncation truncation);

/// Block-wise thin QR with the same block splitting: q has orthonormal columns
/// and m = q * r.
struct MatrixQr {
  Matrix q;
  Matrix r;
};
[[nodiscard]] MatrixQr thin_qr(const Matrix& m);

/// a * b computed only over the dense sub-blocks implied by the exact-zero
/// patterns of a's columns and b's rows. Equals a * b for any input.
[[nodiscard]] Matrix structured_product(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

/// Absolute tolerance on |h - h^dagger| accepted by exponentiate_generator.
inline constexpr double kHermitianTolerance = 1e-12;

/// exp(-i * prefactor * h) for Hermitian h, by eigendecomposition. The input is
/// symmetrized before diagonalization.
[[nodiscard]] ComplexTensor exponentiate_generator(const ComplexTensor& h, double prefactor);
[[nodiscard]] Matrix exponentiate_generator(const Matrix& h, double prefactor);

/// Kronecker product, a's index is the slower one.
[[nodiscard]] Matrix kron(const Matrix& a, const Matrix& b);

}  // namespace wgqed

#pragma once

#include <stdexcept>
#include <string>

namespace wgqed {

/// Extents of paired or combined axes do not agree.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed argument (bad axis set, non-Hermitian generator, invalid parameters).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// The numerical SVD or eigensolver did not converge.
struct DecompositionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An MPS operation was called in a state the stepping protocol never produces.
/// Always a programming bug.
struct ProtocolError : std::logic_error {
  using std::logic_error::logic_error;
};

/// A run exceeded its discarded-weight budget.
struct RunAborted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A verification oracle refused its input (e.g. the memory bound).
struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace wgqed

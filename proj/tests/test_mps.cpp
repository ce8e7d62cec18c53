#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "wgqed/errors.hpp"
#include "wgqed/model.hpp"
#include "wgqed/mps.hpp"

using namespace wgqed;

namespace {

std::mt19937_64 rng(99);

SystemState random_system() {
  std::normal_distribution<double> n(0.0, 1.0);
  SystemState s;
  double total = 0.0;
  for (auto& a : s) {
    a = {n(rng), n(rng)};
    total += std::norm(a);
  }
  for (auto& a : s) a /= std::sqrt(total);
  return s;
}

Matrix random_unitary(Eigen::Index n) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix h(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) h(i, j) = {d(rng), d(rng)};
  h = (h + h.adjoint()).eval() / 2.0;
  return exponentiate_generator(h, 1.0);
}

double vec_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  REQUIRE(a.size() == b.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Builds an entangled 7-site chain: system followed by six bins.
TimeBinMPS entangled_chain() {
  TimeBinMPS mps = TimeBinMPS::init_vacuum(0, 3, random_system());
  for (std::int64_t n = 0; n < 3; ++n) {
    mps.append_vacuum_bin(SiteLabel::bin(Channel::Left, n));
    mps.append_vacuum_bin(SiteLabel::bin(Channel::Right, n));
  }
  // Random two-site unitaries across the chain; truncation off.
  for (std::size_t i = 0; i + 1 < mps.size(); ++i) {
    mps.move_center(i);
    const auto d = static_cast<Eigen::Index>(mps.phys_dim(i) * mps.phys_dim(i + 1));
    mps.apply_gate(i, 2, random_unitary(d), {1000, 0.0}, i + 1);
  }
  return mps;
}

}  // namespace

TEST_CASE("init_vacuum layout") {
  SystemState s{};
  s[7] = 1.0;
  TimeBinMPS mps = TimeBinMPS::init_vacuum(2, 3, s);
  REQUIRE(mps.size() == 5);
  CHECK(mps.label(0) == SiteLabel::bin(Channel::Left, -2));
  CHECK(mps.label(1) == SiteLabel::bin(Channel::Right, -2));
  CHECK(mps.label(3) == SiteLabel::bin(Channel::Right, -1));
  CHECK(mps.system_position() == 4);
  CHECK(mps.center() == 4);
  CHECK(std::abs(mps.norm_squared() - 1.0) < 1e-14);

  SystemState bad{};
  bad[0] = 2.0;
  CHECK_THROWS_AS((void)TimeBinMPS::init_vacuum(0, 3, bad), ArgumentError);
}

TEST_CASE("expect_local examples") {
  SystemState s{};
  s[7] = 1.0;
  TimeBinMPS mps = TimeBinMPS::init_vacuum(1, 3, s);
  CHECK(std::abs(mps.expect_local(0, bin_number(3))) < 1e-15);
  const auto& alg = emitter_algebra();
  CHECK(std::abs(mps.expect_local(2, alg.sigma22[0]) - 1.0) < 1e-14);
  CHECK(std::abs(mps.expect_local(2, Matrix::Identity(8, 8)) - mps.norm_squared()) < 1e-14);

  SystemState only3{};
  only3[1] = 1.0;  // |112>: emitter 3 excited
  TimeBinMPS m3 = TimeBinMPS::init_vacuum(0, 3, only3);
  CHECK(std::abs(m3.expect_local(0, alg.sigma22[0])) < 1e-15);
  CHECK(std::abs(m3.expect_local(0, alg.sigma22[2]) - 1.0) < 1e-15);
  CHECK_THROWS_AS((void)m3.expect_local(0, bin_number(3)), ArgumentError);
}

TEST_CASE("gauge moves and swaps preserve the state vector") {
  TimeBinMPS mps = entangled_chain();
  const auto ref = mps.to_state_vector();
  CHECK(mps.canonical_defect() < 1e-10);

  mps.move_center(0);
  CHECK(vec_diff(mps.to_state_vector(), ref) < 1e-10);
  CHECK(mps.canonical_defect() < 1e-10);
  mps.move_center(mps.size() - 1);
  CHECK(vec_diff(mps.to_state_vector(), ref) < 1e-10);

  // Swap the system (site 0) all the way to the right and back.
  mps.move_center(0);
  for (std::size_t i = 0; i + 1 < mps.size(); ++i) {
    CHECK(mps.swap_adjacent(i) == 0.0);
    CHECK(mps.center() == i + 1);
  }
  CHECK(mps.system_position() == mps.size() - 1);
  CHECK(mps.canonical_defect() < 1e-10);
  for (std::size_t i = mps.size() - 1; i-- > 0;) mps.swap_adjacent(i);
  CHECK(mps.system_position() == 0);
  CHECK(vec_diff(mps.to_state_vector(), ref) < 1e-10);
}

TEST_CASE("swap permutes the physical indices") {
  TimeBinMPS mps = entangled_chain();
  mps.move_center(2);
  const auto before = mps.to_state_vector();
  mps.swap_adjacent(2);
  const auto after = mps.to_state_vector();
  // Sites 2 and 3 are both bins (dimension 3); every other site is untouched.
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < mps.size(); ++i) dims.push_back(mps.phys_dim(i));
  std::size_t right = 1;
  for (std::size_t i = 4; i < dims.size(); ++i) right *= dims[i];
  double d = 0.0;
  for (std::size_t s0 = 0; s0 < dims[0] * dims[1]; ++s0)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t r = 0; r < right; ++r) {
          const std::size_t ib = ((s0 * 3 + a) * 3 + b) * right + r;
          const std::size_t ia = ((s0 * 3 + b) * 3 + a) * right + r;
          d = std::max(d, std::abs(before[ib] - after[ia]));
        }
  CHECK(d < 1e-10);
  CHECK(mps.label(2) == SiteLabel::bin(Channel::Left, 1));

  mps.move_center(0);
  CHECK_THROWS_AS(mps.swap_adjacent(4), ProtocolError);
}

TEST_CASE("apply_gate matches the dense product") {
  TimeBinMPS mps = entangled_chain();
  mps.move_center(2);
  const auto before = mps.to_state_vector();
  const Matrix u = random_unitary(27);
  mps.apply_gate(1, 3, u, {1000, 0.0}, 3);
  CHECK(mps.center() == 3);
  CHECK(mps.canonical_defect() < 1e-10);
  const auto after = mps.to_state_vector();

  // Site 0 is the system (dim 8); sites 1..3 the gate's run; rest (3 sites) trailing.
  const std::size_t right = 27;
  double d = 0.0;
  for (std::size_t s0 = 0; s0 < 8; ++s0)
    for (std::size_t g = 0; g < 27; ++g)
      for (std::size_t r = 0; r < right; ++r) {
        cplx acc = 0.0;
        for (std::size_t h = 0; h < 27; ++h) acc += u(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) * before[(s0 * 27 + h) * right + r];
        d = std::max(d, std::abs(acc - after[(s0 * 27 + g) * right + r]));
      }
  CHECK(d < 1e-10);
  CHECK(std::abs(mps.norm_squared() - 1.0) < 1e-12);

  CHECK_THROWS_AS(mps.apply_gate(2, 2, Matrix::Identity(5, 5), {}, 3), ArgumentError);
}

TEST_CASE("truncation reports the dropped weight") {
  TimeBinMPS mps = entangled_chain();
  mps.move_center(3);
  const std::size_t bond_before = mps.max_bond();
  const auto rep = mps.apply_gate(3, 2, random_unitary(9), {1, 0.0}, 4);
  CHECK(rep.discarded_weight >= 0.0);
  CHECK(mps.bond(3) == 1);
  CHECK(bond_before > 1);
  CHECK(1.0 - mps.norm_squared() <= rep.discarded_weight + 1e-12);
}

TEST_CASE("expect_many agrees with expect_local") {
  TimeBinMPS mps = entangled_chain();
  mps.move_center(3);
  const std::size_t sites[] = {0, 1, 4, 6};
  const Matrix ops[] = {emitter_algebra().sigma22[1], bin_number(3), bin_number(3), bin_number(3)};
  const auto many = mps.expect_many(sites, ops);
  CHECK(mps.center() == 3);
  for (std::size_t k = 0; k < 4; ++k) {
    TimeBinMPS copy = mps;
    CHECK(std::abs(many[k] - copy.expect_local(sites[k], ops[k])) < 1e-12);
  }
}

TEST_CASE("drop_left keeps the remaining state") {
  TimeBinMPS mps = entangled_chain();
  mps.move_center(4);
  TimeBinMPS copy = mps;
  const double n5 = std::real(copy.expect_local(5, bin_number(3)));
  mps.drop_left(2);
  CHECK(mps.size() == 5);
  CHECK(mps.bond(0) > 0);
  CHECK(std::abs(std::real(mps.expect_local(3, bin_number(3))) - n5) < 1e-12);
  CHECK(std::abs(mps.norm_squared() - 1.0) < 1e-12);
  CHECK_THROWS_AS(mps.drop_left(5), ProtocolError);
}

TEST_CASE("checkpoint round trip") {
  TimeBinMPS mps = entangled_chain();
  mps.move_center(2);
  std::stringstream buf;
  mps.save(buf);
  TimeBinMPS back = TimeBinMPS::load(buf);
  CHECK(back.size() == mps.size());
  CHECK(back.center() == mps.center());
  for (std::size_t i = 0; i < mps.size(); ++i) CHECK(back.label(i) == mps.label(i));
  CHECK(vec_diff(back.to_state_vector(), mps.to_state_vector()) == 0.0);

  std::stringstream junk("not a checkpoint");
  CHECK_THROWS((void)TimeBinMPS::load(junk));
}

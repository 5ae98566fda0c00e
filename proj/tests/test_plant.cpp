#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "safeil/plant.hpp"
#include "test_util.hpp"

using namespace safeil;
using namespace safeil::test;

namespace {
Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}
ControlLaw zero_law(int n_u) {
  return [n_u](const Vector&) { return Vector(Vector::Zero(n_u)); };
}
}  // namespace

TEST_CASE("step equilibrium and paper columns") {
  const LtiPlant gtm = make_gtm();
  CHECK(step(gtm, Vector::Zero(2), Vector::Zero(1)).norm() == 0.0);

  const Vector next = step(gtm, vec2(1, 0), Vector::Zero(1));
  CHECK(next(0) == doctest::Approx(0.935).epsilon(1e-12));
  CHECK(next(1) == doctest::Approx(-0.907).epsilon(1e-12));

  const LtiPlant pen = make_pendulum();
  const Vector pnext = step(pen, vec2(0, 1), Vector::Zero(1));
  CHECK(pnext(0) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(pnext(1) == doctest::Approx(1.0 - 0.5 * 0.02 / (0.15 * 0.25)).epsilon(1e-12));
  CHECK(pnext(1) == doctest::Approx(0.733333).epsilon(1e-5));
}

TEST_CASE("step linearity") {
  Rng rng(3);
  const LtiPlant pen = make_pendulum();
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x1 = random_in_box(rng, vec2(-1, -1), vec2(1, 1));
    const Vector x2 = random_in_box(rng, vec2(-1, -1), vec2(1, 1));
    const Vector u1 = Vector::Constant(1, uniform(rng, -1, 1));
    const Vector u2 = Vector::Constant(1, uniform(rng, -1, 1));
    const Vector lhs = step(pen, x1 + x2, u1 + u2);
    const Vector rhs =
        step(pen, x1, u1) + step(pen, x2, u2) - step(pen, Vector::Zero(2), Vector::Zero(1));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + lhs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("simulate zero start stays at zero") {
  const Trajectory traj = simulate(make_gtm(), zero_law(1), Vector::Zero(2), 100, 0.0);
  for (const auto& x : traj.states) CHECK(x.norm() == 0.0);
}

TEST_CASE("pendulum open loop is unstable, GTM open loop converges") {
  const Trajectory unstable =
      simulate(make_pendulum(), zero_law(1), vec2(0.1, 0), 200, 0.0);
  CHECK(unstable.states.back().norm() > vec2(0.1, 0).norm());

  const Trajectory stable = simulate(make_gtm(), zero_law(1), vec2(1, 1), 2000, 1e-3);
  CHECK(!stable.diverged);
  CHECK(stable.states.back().norm() <= 1e-3);
}

TEST_CASE("spectral radius convergence property") {
  // for a plant with spectral radius < 1 the open loop contracts below 1e-6
  Rng rng(5);
  const LtiPlant gtm = make_gtm();
  for (int trial = 0; trial < 10; ++trial) {
    Vector x0 = random_in_box(rng, vec2(-1, -1), vec2(1, 1));
    if (x0.norm() > 1.0) x0 /= x0.norm();
    const Trajectory traj = simulate(gtm, zero_law(1), x0, 5000, 1e-6);
    CHECK(traj.states.back().norm() <= 1e-6);
  }
}

TEST_CASE("simulate flags divergence instead of crashing") {
  Matrix a(1, 1), b(1, 1);
  a << 3.0, b << 0.0;
  const Trajectory traj =
      simulate(LtiPlant(a, b), zero_law(1), Vector::Constant(1, 1.0), 100, 0.0);
  CHECK(traj.diverged);
  CHECK(traj.states.back().allFinite());
}

TEST_CASE("bounding box: axis aligned presets") {
  const auto [plo, phi] = bounding_box(make_pendulum_box());
  CHECK(plo.isApprox(vec2(-2.5, -6)));
  CHECK(phi.isApprox(vec2(2.5, 6)));
  const auto [glo, ghi] = bounding_box(make_gtm_box());
  CHECK(glo.isApprox(vec2(-2, -3)));
  CHECK(ghi.isApprox(vec2(2, 3)));
}

TEST_CASE("bounding box: diamond via vertex enumeration") {
  Matrix h(2, 2);
  h << 1, 1, 1, -1;
  const Polytope diamond(h, Vector::Ones(2));
  const auto [lo, hi] = bounding_box(diamond);
  CHECK(lo.isApprox(vec2(-1, -1), 1e-9));
  CHECK(hi.isApprox(vec2(1, 1), 1e-9));
}

TEST_CASE("bounding box rejects unbounded polytope") {
  Matrix h(1, 2);
  h << 1, 0;  // no bound on x2
  CHECK_THROWS_AS(bounding_box(Polytope(h, Vector::Ones(1))), Error);
}

TEST_CASE("ellipsoid_in_polytope examples") {
  const Polytope unit_box(Matrix::Identity(2, 2), Vector::Ones(2));

  auto at_boundary = ellipsoid_in_polytope(SymMatrix::identity(2), unit_box);
  CHECK(at_boundary.inside);
  CHECK(at_boundary.margins.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-14));

  Vector d(2);
  d << 4, 1;
  auto outside = ellipsoid_in_polytope(SymMatrix::diag(d), unit_box);
  CHECK(!outside.inside);
  CHECK(outside.margins(0) == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(outside.margins(1) == doctest::Approx(0.0).epsilon(1e-12));

  auto strict = ellipsoid_in_polytope(symmetrize(0.25 * Matrix::Identity(2, 2)), unit_box);
  CHECK(strict.inside);
  CHECK(strict.margins(0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(strict.margins(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("contains examples") {
  const Polytope x = make_pendulum_box();
  CHECK(contains(x, Vector::Zero(2)));
  CHECK(contains(x, vec2(2.5, 6)));  // boundary counts as inside
  CHECK(!contains(x, vec2(2.6, 0)));
}

TEST_CASE("sample_in_ellipsoid membership and determinism") {
  const auto unit = sample_in_ellipsoid(Ellipsoid(SymMatrix::identity(3)), 200, 42);
  CHECK(unit.size() == 200);
  for (const auto& x : unit) CHECK(x.norm() <= 1.0 + 1e-12);

  CHECK(sample_in_ellipsoid(Ellipsoid(SymMatrix::identity(2)), 0, 1).empty());

  Vector d(2);
  d << 0.25, 1.0;
  const Ellipsoid e{SymMatrix::diag(d)};
  for (const auto& x : sample_in_ellipsoid(e, 500, 7))
    CHECK(x.dot(e.p.mat() * x) <= 1.0 + 1e-12);

  const auto again = sample_in_ellipsoid(Ellipsoid(SymMatrix::identity(3)), 200, 42);
  for (size_t i = 0; i < unit.size(); ++i) CHECK((unit[i] - again[i]).norm() == 0.0);
}

TEST_CASE("containment soundness: boundary samples stay inside the polytope") {
  Rng rng(29);
  const Polytope x = make_pendulum_box();
  for (int trial = 0; trial < 5; ++trial) {
    // random PD Q1 scaled until contained
    Matrix q1 = random_pd(rng, 2).mat();
    double tau = 1e9;
    for (int i = 0; i < x.num_rows(); ++i) {
      const Vector hi = x.h_mat.row(i).transpose();
      tau = std::min(tau, x.h_vec(i) * x.h_vec(i) / hi.dot(q1 * hi));
    }
    q1 *= tau * uniform(rng, 0.2, 0.95);
    REQUIRE(ellipsoid_in_polytope(symmetrize(q1), x).inside);
    // boundary of E(Q1^{-1}) is {G s : ||s|| = 1} with Q1 = G G^T
    auto g = cholesky(symmetrize(q1));
    REQUIRE(g.has_value());
    for (int k = 0; k < 10000; ++k) {
      Vector s(2);
      s << gaussian(rng), gaussian(rng);
      if (s.norm() == 0.0) continue;
      s /= s.norm();
      CHECK(contains(x, *g * s));
    }
  }
}

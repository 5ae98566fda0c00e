#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "safeil/lmi.hpp"
#include "safeil/looptrans.hpp"
#include "test_util.hpp"

using namespace safeil;
using namespace safeil::test;

namespace {

SectorBounds constant_sectors(int n, double alpha, double beta) {
  SectorBounds s;
  s.alpha = Vector::Constant(n, alpha);
  s.beta = Vector::Constant(n, beta);
  return s;
}

SectorBounds box_sectors(const NnController& nn, double half_width, Rng& rng) {
  Vector lo(nn.input_dim()), hi(nn.input_dim());
  for (int i = 0; i < lo.size(); ++i) {
    hi(i) = uniform(rng, 0.2, half_width);
    lo(i) = -uniform(rng, 0.2, half_width);
  }
  return local_sectors(propagate_bounds(nn, lo, hi), nn.activation, nn.leak);
}

}  // namespace

TEST_CASE("identity sector is a fixed point of the transformation") {
  Rng rng(201);
  const NnController nn = random_net(rng, 2, {3, 4}, 1);
  const WeightMatrixN n = assemble_n(nn);
  const auto t = loop_transform(n, constant_sectors(nn.phi_dim(), -1.0, 1.0));
  CHECK((t.n_ux - n.n_ux).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((t.n_uz - n.n_uw).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((t.n_vx - n.n_vx).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((t.n_vz - n.n_vw).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("hand example: scalar one-hidden-layer net") {
  // W1 = 1, W2 = 1, alpha = 0.5, beta = 1
  WeightMatrixN n;
  n.layer_sizes = {1};
  n.n_ux = Matrix::Zero(1, 1);
  n.n_uw = Matrix::Ones(1, 1);
  n.n_vx = Matrix::Ones(1, 1);
  n.n_vw = Matrix::Zero(1, 1);
  const auto t = loop_transform(n, constant_sectors(1, 0.5, 1.0));
  CHECK(t.n_ux(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(t.n_uz(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(t.n_vx(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(t.n_vz(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("neumann_inverse: identity, two-layer shortcut, multiply-back") {
  CHECK((neumann_inverse(Matrix::Zero(3, 3), {3}) - Matrix::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  Rng rng(203);
  // single subdiagonal block: (I - C4)^{-1} = I + C4
  Matrix c4 = Matrix::Zero(5, 5);
  c4.block(2, 0, 3, 2) = random_matrix(rng, 3, 2);
  const Matrix inv = neumann_inverse(c4, {2, 3});
  CHECK((inv - (Matrix::Identity(5, 5) + c4)).cwiseAbs().maxCoeff() == 0.0);

  // three layers: multiply-back oracle
  Matrix c(6, 6);
  c.setZero();
  c.block(2, 0, 2, 2) = random_matrix(rng, 2, 2);
  c.block(4, 2, 2, 2) = random_matrix(rng, 2, 2);
  c.block(4, 0, 2, 2) = random_matrix(rng, 2, 2);
  const Matrix e = neumann_inverse(c, {2, 2, 2});
  CHECK(((Matrix::Identity(6, 6) - c) * e - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() <=
        1e-12);
}

TEST_CASE("neumann_inverse rejects structural violations") {
  Matrix c4 = Matrix::Zero(4, 4);
  c4(0, 2) = 1.0;  // above the block diagonal
  CHECK_THROWS_AS(neumann_inverse(c4, {2, 2}), Error);
}

TEST_CASE("structural invertibility: C4 is nilpotent for assembled nets") {
  Rng rng(205);
  for (int trial = 0; trial < 10; ++trial) {
    const NnController nn = random_net(rng, 2, {3, 4, 2}, 1, 2.0);
    const WeightMatrixN n = assemble_n(nn);
    Matrix power = n.n_vw;
    for (size_t k = 1; k < n.layer_sizes.size(); ++k) power = power * n.n_vw;
    CHECK(power.cwiseAbs().maxCoeff() == 0.0);  // exactly zero by structure
  }
}

TEST_CASE("forward_transformed: zero input, identity sectors") {
  Rng rng(207);
  const NnController nn = random_net(rng, 3, {4, 3}, 2);
  const WeightMatrixN n = assemble_n(nn);
  const auto sid = constant_sectors(nn.phi_dim(), -1.0, 1.0);
  const auto t = loop_transform(n, sid);

  const auto [u0, tr0] =
      forward_transformed(t, nn.activation, nn.leak, sid, n.layer_sizes, Vector::Zero(3));
  CHECK(u0.norm() == 0.0);
  CHECK(tr0.z_phi->norm() == 0.0);

  for (int k = 0; k < 100; ++k) {
    const Vector x = random_in_box(rng, Vector::Constant(3, -2), Vector::Constant(3, 2));
    const auto [u, tr] = forward_transformed(t, nn.activation, nn.leak, sid, n.layer_sizes, x);
    CHECK((u - forward(nn, x)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("equivalence: transformed path reproduces forward on the box") {
  Rng rng(209);
  for (int trial = 0; trial < 20; ++trial) {
    const NnController nn = random_net(rng, 2, {4, 3}, 1, 1.5);
    const WeightMatrixN n = assemble_n(nn);
    Vector lo(2), hi(2);
    for (int i = 0; i < 2; ++i) {
      hi(i) = uniform(rng, 0.3, 2.0);
      lo(i) = -uniform(rng, 0.3, 2.0);
    }
    const auto sectors = local_sectors(propagate_bounds(nn, lo, hi), nn.activation, nn.leak);
    const auto t = loop_transform(n, sectors);
    for (int k = 0; k < 100; ++k) {
      const Vector x = random_in_box(rng, lo, hi);
      const auto [u, trace] =
          forward_transformed(t, nn.activation, nn.leak, sectors, n.layer_sizes, x);
      CHECK((u - forward(nn, x)).cwiseAbs().maxCoeff() <= 1e-9);
      // the transformed trace reproduces the original pre-activations
      CHECK((trace.v_phi - activations(nn, x).v_phi).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("recover_tilde round trips") {
  Rng rng(211);
  const int n_g = 2, n_u = 1, n_phi = 5;
  for (int trial = 0; trial < 20; ++trial) {
    TransformedNn tilde{random_matrix(rng, n_u, n_g), random_matrix(rng, n_u, n_phi),
                        random_matrix(rng, n_phi, n_g), random_matrix(rng, n_phi, n_phi)};
    const SymMatrix q1 = random_pd(rng, n_g);
    Vector q2(n_phi);
    for (int i = 0; i < n_phi; ++i) q2(i) = uniform(rng, 0.1, 3.0);

    SynthesisVars vars{q1, q2, tilde.n_ux * q1.mat(), tilde.n_uz * q2.asDiagonal(),
                       tilde.n_vx * q1.mat(), tilde.n_vz * q2.asDiagonal()};
    const TransformedNn rec = recover_tilde(vars);
    CHECK((tilde_as_matrix(rec) - tilde_as_matrix(tilde)).cwiseAbs().maxCoeff() <= 1e-10);

    // Q = I: Ntilde = L
    SynthesisVars vid{SymMatrix::identity(n_g), Vector::Ones(n_phi),
                      random_matrix(rng, n_u, n_g), random_matrix(rng, n_u, n_phi),
                      random_matrix(rng, n_phi, n_g), random_matrix(rng, n_phi, n_phi)};
    const TransformedNn rid = recover_tilde(vid);
    CHECK((rid.n_ux - vid.l1).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((rid.n_vz - vid.l4).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("penalty_residual: zero at consistent L, norm of f(N) when L = 0") {
  Rng rng(213);
  const NnController nn = random_net(rng, 2, {3, 3}, 1);
  const WeightMatrixN n = assemble_n(nn);
  const auto sectors = box_sectors(nn, 1.5, rng);
  const Matrix f = tilde_as_matrix(loop_transform(n, sectors));
  const int n_phi = nn.phi_dim();

  const SymMatrix q1 = random_pd(rng, 2);
  Vector q2(n_phi);
  for (int i = 0; i < n_phi; ++i) q2(i) = uniform(rng, 0.5, 2.0);
  Matrix fq(f.rows(), f.cols());
  fq.leftCols(2) = f.leftCols(2) * q1.mat();
  fq.rightCols(n_phi) = f.rightCols(n_phi) * q2.asDiagonal();

  SynthesisVars consistent{q1, q2, fq.topLeftCorner(1, 2), fq.topRightCorner(1, n_phi),
                           fq.bottomLeftCorner(n_phi, 2), fq.bottomRightCorner(n_phi, n_phi)};
  CHECK(penalty_residual(n, sectors, consistent).second <= 1e-12);

  SynthesisVars zero_l{SymMatrix::identity(2), Vector::Ones(n_phi), Matrix::Zero(1, 2),
                       Matrix::Zero(1, n_phi), Matrix::Zero(n_phi, 2),
                       Matrix::Zero(n_phi, n_phi)};
  CHECK(penalty_residual(n, sectors, zero_l).second == doctest::Approx(f.norm()).epsilon(1e-12));

  // paper-form residual is zero exactly when L = f(N) Q
  CHECK(paper_residual(n, sectors, consistent) <= 1e-10);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "safeil/lmi.hpp"
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

NnController zero_net(int input, std::vector<int> hidden, int output) {
  NnController nn;
  int prev = input;
  for (int h : hidden) {
    nn.weights.push_back(Matrix::Zero(h, prev));
    prev = h;
  }
  nn.weights.push_back(Matrix::Zero(output, prev));
  return nn;
}

}  // namespace

TEST_CASE("theorem1 reduction for the zero network") {
  const LtiPlant gtm = make_gtm();
  const NnController nn = zero_net(2, {3}, 1);
  const WeightMatrixN n = assemble_n(nn);
  const SymMatrix p = dlyap_ata(gtm.a_g);  // A^T P A - P = -I
  const AnalysisCertificate cert(p, Vector::Zero(3));
  const SymMatrix lhs = assemble_theorem1(gtm, n, constant_sectors(3, 0.0, 1.0), cert);

  CHECK((lhs.mat().topLeftCorner(2, 2) + Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(lhs.mat().bottomRightCorner(3, 3).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(min_eig_sym(symmetrize(lhs.mat().topLeftCorner(2, 2))) ==
        doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("assemblies are exactly symmetric") {
  Rng rng(301);
  const LtiPlant gtm = make_gtm();
  const NnController nn = random_net(rng, 2, {3, 2}, 1);
  const WeightMatrixN n = assemble_n(nn);
  const auto sectors = constant_sectors(nn.phi_dim(), 0.3, 1.0);
  const AnalysisCertificate cert(random_pd(rng, 2), Vector::Ones(nn.phi_dim()));

  const SymMatrix t1 = assemble_theorem1(gtm, n, sectors, cert);
  CHECK((t1.mat() - t1.mat().transpose()).cwiseAbs().maxCoeff() == 0.0);

  const auto tilde = loop_transform(n, sectors);
  const SymMatrix t2 = assemble_transformed(gtm, tilde, cert);
  CHECK((t2.mat() - t2.mat().transpose()).cwiseAbs().maxCoeff() == 0.0);

  SynthesisVars vars{random_pd(rng, 2), Vector::Ones(nn.phi_dim()).eval(),
                     random_matrix(rng, 1, 2), random_matrix(rng, 1, nn.phi_dim()),
                     random_matrix(rng, nn.phi_dim(), 2),
                     random_matrix(rng, nn.phi_dim(), nn.phi_dim())};
  const SymMatrix t3 = assemble_synthesis(gtm, vars);
  CHECK((t3.mat() - t3.mat().transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity sectors: transformed LMI equals theorem1 with doubled lambda") {
  Rng rng(303);
  const LtiPlant gtm = make_gtm();
  for (int trial = 0; trial < 10; ++trial) {
    const NnController nn = random_net(rng, 2, {3, 2}, 1);
    const WeightMatrixN n = assemble_n(nn);
    const auto sectors = constant_sectors(nn.phi_dim(), -1.0, 1.0);
    const SymMatrix p = random_pd(rng, 2);
    Vector lambda(nn.phi_dim());
    for (int i = 0; i < lambda.size(); ++i) lambda(i) = uniform(rng, 0.1, 2.0);

    const SymMatrix m14 = assemble_theorem1(gtm, n, sectors, AnalysisCertificate(p, lambda));
    const auto tilde = loop_transform(n, sectors);
    // the normalized-sector form absorbs the factor 2 into Lambda
    const SymMatrix m18 =
        assemble_transformed(gtm, tilde, AnalysisCertificate(p, 2.0 * lambda));
    CHECK((m14.mat() - m18.mat()).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("general sectors: quadratic forms agree through the loop-transform bijection") {
  Rng rng(305);
  const LtiPlant gtm = make_gtm();
  for (int trial = 0; trial < 10; ++trial) {
    const NnController nn = random_net(rng, 2, {3, 3}, 1, 1.3);
    const WeightMatrixN n = assemble_n(nn);
    const int n_phi = nn.phi_dim();
    SectorBounds s;
    s.alpha = Vector::NullaryExpr(n_phi, [&](int) { return uniform(rng, 0.2, 0.8); });
    s.beta = Vector::Ones(n_phi);
    const SymMatrix p = random_pd(rng, 2);
    Vector lambda(n_phi);
    for (int i = 0; i < n_phi; ++i) lambda(i) = uniform(rng, 0.1, 2.0);
    // lambda_tilde = (beta - alpha)^2 lambda / 2
    Vector lambda_t(n_phi);
    for (int i = 0; i < n_phi; ++i) {
      const double d = s.beta(i) - s.alpha(i);
      lambda_t(i) = 0.5 * d * d * lambda(i);
    }

    const SymMatrix m14 = assemble_theorem1(gtm, n, s, AnalysisCertificate(p, lambda));
    const auto tilde = loop_transform(n, s);
    const SymMatrix m18 = assemble_transformed(gtm, tilde, AnalysisCertificate(p, lambda_t));

    for (int k = 0; k < 50; ++k) {
      Vector xz(2 + n_phi);
      for (int i = 0; i < xz.size(); ++i) xz(i) = uniform(rng, -1, 1);
      const Vector x = xz.head(2), z = xz.tail(n_phi);
      const Vector v = tilde.n_vx * x + tilde.n_vz * z;
      Vector w(n_phi);
      for (int i = 0; i < n_phi; ++i)
        w(i) = 0.5 * (s.beta(i) - s.alpha(i)) * z(i) + 0.5 * (s.alpha(i) + s.beta(i)) * v(i);
      Vector xw(2 + n_phi);
      xw << x, w;
      const double q14 = xw.dot(m14.mat() * xw);
      const double q18 = xz.dot(m18.mat() * xz);
      CHECK(q14 == doctest::Approx(q18).epsilon(1e-9));
    }
  }
}

TEST_CASE("synthesis LMI with L = 0 on a stable plant") {
  const LtiPlant gtm = make_gtm();
  const int n_phi = 3;
  const SymMatrix q1 = dlyap_aat(gtm.a_g);  // A Q1 A^T - Q1 = -I
  for (double eps : {1e-3, 1e-1, 1.0}) {
    SynthesisVars vars{q1, Vector::Constant(n_phi, eps), Matrix::Zero(1, 2),
                       Matrix::Zero(1, n_phi), Matrix::Zero(n_phi, 2),
                       Matrix::Zero(n_phi, n_phi)};
    CHECK(min_eig_sym(assemble_synthesis(gtm, vars)) > 0.0);
  }
}

TEST_CASE("schur chain: Eq.26 PD iff Eq.25 PD iff Eq.18 ND") {
  Rng rng(307);
  const LtiPlant gtm = make_gtm();
  const int n_phi = 4;
  // base strictly feasible instance built from the zero controller
  const SymMatrix q1_base = dlyap_aat(gtm.a_g);
  int checked = 0;
  for (int trial = 0; trial < 80 && checked < 25; ++trial) {
    const double bump = uniform(rng, 0.0, 1.2);
    SynthesisVars vars{q1_base, Vector::Ones(n_phi).eval(),
                       bump * random_matrix(rng, 1, 2), bump * random_matrix(rng, 1, n_phi),
                       bump * random_matrix(rng, n_phi, 2),
                       bump * random_matrix(rng, n_phi, n_phi)};
    const double eig26 = min_eig_sym(assemble_synthesis(gtm, vars));
    if (std::abs(eig26) < 1e-6) continue;  // skip knife-edge cases
    ++checked;

    const SymMatrix p = symmetrize(solve_pd(vars.q1, Matrix::Identity(2, 2)));
    const Vector lambda = vars.q2.cwiseInverse();
    const TransformedNn tilde = recover_tilde(vars);
    const AnalysisCertificate cert(p, lambda);
    const double eig25 = min_eig_sym(assemble_intermediate(gtm, tilde, cert));
    // negative definiteness of Eq. 18 means the negated matrix is PD
    const double neg18 = min_eig_sym(symmetrize(-assemble_transformed(gtm, tilde, cert).mat()));

    CHECK((eig26 > 1e-8) == (eig25 > 1e-8));
    CHECK((eig26 > 1e-8) == (neg18 > 1e-8));
  }
  CHECK(checked >= 20);
}

TEST_CASE("safety rows: examples and the Schur-complement oracle") {
  const Polytope unit_box(Matrix::Identity(2, 2), Vector::Ones(2));
  const Vector slack_id = safety_rows(SymMatrix::identity(2), unit_box);
  CHECK(slack_id.cwiseAbs().maxCoeff() <= 1e-14);

  Vector d(2);
  d << 6.25, 36.0;
  const Vector pend = safety_rows(SymMatrix::diag(d), make_pendulum_box());
  CHECK(pend.cwiseAbs().maxCoeff() <= 1e-12);  // boundary-touching ellipse

  Rng rng(309);
  const Polytope poly = make_gtm_box();
  for (int trial = 0; trial < 100; ++trial) {
    const SymMatrix q1 = symmetrize(random_pd(rng, 2).mat() * uniform(rng, 0.1, 10.0));
    const Vector slacks = safety_rows(q1, poly);
    const SymMatrix p = symmetrize(solve_pd(q1, Matrix::Identity(2, 2)));
    for (int i = 0; i < poly.num_rows(); ++i) {
      if (std::abs(slacks(i)) < 1e-8) continue;
      Matrix schur(3, 3);  // [[h^2, H_i^T], [H_i, P]]
      schur(0, 0) = poly.h_vec(i) * poly.h_vec(i);
      schur.block(0, 1, 1, 2) = poly.h_mat.row(i);
      schur.block(1, 0, 2, 1) = poly.h_mat.row(i).transpose();
      schur.block(1, 1, 2, 2) = p.mat();
      const bool psd = min_eig_sym(symmetrize(schur)) >= -1e-9;
      CHECK(psd == (slacks(i) >= 0.0));
    }
  }
}

TEST_CASE("theorem1 semantics: Lyapunov decrease and invariance by sampling") {
  // zero network on the stable GTM plant with a certificate built by hand
  const LtiPlant gtm = make_gtm();
  const NnController nn = zero_net(2, {2}, 1);
  const WeightMatrixN n = assemble_n(nn);
  const auto b = propagate_bounds(nn, Vector::Constant(2, -2.0), Vector::Constant(2, 2.0));
  const auto sectors = local_sectors(b, nn.activation, nn.leak);

  // P = c * dlyap with c chosen so E(P) fits in X
  const Polytope x_set = make_gtm_box();
  Matrix p0 = dlyap_ata(gtm.a_g).mat();
  double c = 0.0;
  for (int i = 0; i < x_set.num_rows(); ++i) {
    const Vector hi = x_set.h_mat.row(i).transpose();
    const Matrix p0inv = solve_pd(symmetrize(p0), Matrix::Identity(2, 2));
    c = std::max(c, hi.dot(p0inv * hi) / (x_set.h_vec(i) * x_set.h_vec(i)));
  }
  const SymMatrix p = symmetrize(1.01 * c * p0);
  const AnalysisCertificate cert(p, Vector::Ones(2));

  REQUIRE(min_eig_sym(symmetrize(-assemble_theorem1(gtm, n, sectors, cert).mat())) > 1e-8);
  const Vector slacks = safety_rows(symmetrize(solve_pd(p, Matrix::Identity(2, 2))), x_set);
  REQUIRE((slacks.array() >= -1e-9).all());

  const auto samples = sample_in_ellipsoid(Ellipsoid(p), 1000, 404);
  int decrease_failures = 0;
  for (const auto& x0 : samples) {
    if (x0.norm() < 1e-12) continue;
    const Vector x1 = step(gtm, x0, forward(nn, x0));
    if (!(x1.dot(p.mat() * x1) < x0.dot(p.mat() * x0))) ++decrease_failures;
  }
  CHECK(decrease_failures == 0);

  // invariance: trajectories starting in E(P) never exit E(P)
  for (int k = 0; k < 50; ++k) {
    Vector x = samples[static_cast<size_t>(k)];
    for (int step_idx = 0; step_idx < 2000; ++step_idx) {
      x = step(gtm, x, forward(nn, x));
      CHECK(x.dot(p.mat() * x) <= 1.0 + 1e-9);
      if (x.norm() < 1e-14) break;
    }
  }
}

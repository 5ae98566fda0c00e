#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "safeil/admm.hpp"
#include "test_util.hpp"

using namespace safeil;
using namespace safeil::test;

namespace {

struct Instance {
  NnController nn;
  SectorBounds sectors;
  SynthesisVars vars;
  Matrix y;
  DataPairs data;
};

Instance random_instance(Rng& rng, bool perfect_fit = false) {
  NnController nn = random_net(rng, 2, {3, 3}, 1, 1.1);
  const auto bounds = propagate_bounds(nn, Vector::Constant(2, -1.5), Vector::Constant(2, 1.5));
  const int n_phi = nn.phi_dim();
  Vector q2(n_phi);
  for (int i = 0; i < n_phi; ++i) q2(i) = uniform(rng, 0.3, 2.0);
  Instance inst{std::move(nn),
                local_sectors(bounds, Activation::Tanh, 0.01),
                SynthesisVars{random_pd(rng, 2), q2, random_matrix(rng, 1, 2),
                              random_matrix(rng, 1, n_phi), random_matrix(rng, n_phi, 2),
                              random_matrix(rng, n_phi, n_phi)},
                random_matrix(rng, 1 + n_phi, 2 + n_phi),
                {}};
  for (int i = 0; i < 15; ++i) {
    const Vector x = random_in_box(rng, Vector::Constant(2, -1.5), Vector::Constant(2, 1.5));
    inst.data.emplace_back(
        x, perfect_fit ? forward(inst.nn, x) : Vector::Constant(1, uniform(rng, -1, 1)));
  }
  return inst;
}

AdmmConfig test_cfg(double rho, double eta1, double eta2) {
  AdmmConfig cfg;
  cfg.rho = rho;
  cfg.eta1 = eta1;
  cfg.eta2 = eta2;
  return cfg;
}

}  // namespace

TEST_CASE("augmented loss: consistent L and perfect fit leave only the volume term") {
  Rng rng(701);
  Instance inst = random_instance(rng, /*perfect_fit=*/true);
  // L := f(N) Q makes the multiplier and penalty terms vanish
  const Matrix f = tilde_as_matrix(loop_transform(assemble_n(inst.nn), inst.sectors));
  const int n_phi = inst.nn.phi_dim();
  Matrix fq(f.rows(), f.cols());
  fq.leftCols(2) = f.leftCols(2) * inst.vars.q1.mat();
  fq.rightCols(n_phi) = f.rightCols(n_phi) * inst.vars.q2.asDiagonal();
  inst.vars.l1 = fq.topLeftCorner(1, 2);
  inst.vars.l2 = fq.topRightCorner(1, n_phi);
  inst.vars.l3 = fq.bottomLeftCorner(n_phi, 2);
  inst.vars.l4 = fq.bottomRightCorner(n_phi, n_phi);

  const AdmmConfig cfg = test_cfg(1.0, 200.0, 10.0);
  double terms[4];
  const double value =
      augmented_loss(inst.nn, inst.vars, inst.y, cfg, inst.data, inst.sectors, terms);
  CHECK(value == doctest::Approx(-10.0 * logdet_pd(inst.vars.q1)).epsilon(1e-9));
  CHECK(terms[0] <= 1e-18);
  CHECK(std::abs(terms[2]) <= 1e-10);
  CHECK(terms[3] <= 1e-20);
}

TEST_CASE("augmented loss: rho = 0, Y = 0 reduces to the weighted objective") {
  Rng rng(703);
  Instance inst = random_instance(rng);
  const AdmmConfig cfg = test_cfg(0.0, 7.0, 3.0);
  const Matrix y0 = Matrix::Zero(inst.y.rows(), inst.y.cols());
  const double value = augmented_loss(inst.nn, inst.vars, y0, cfg, inst.data, inst.sectors);
  const double expected =
      7.0 * mse_loss(inst.nn, inst.data) - 3.0 * logdet_pd(inst.vars.q1);
  CHECK(value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("augmented loss: doubling rho changes exactly the quadratic term") {
  Rng rng(705);
  Instance inst = random_instance(rng);
  double t1[4], t2[4];
  augmented_loss(inst.nn, inst.vars, inst.y, test_cfg(1.0, 5.0, 2.0), inst.data, inst.sectors,
                 t1);
  augmented_loss(inst.nn, inst.vars, inst.y, test_cfg(2.0, 5.0, 2.0), inst.data, inst.sectors,
                 t2);
  CHECK(t2[3] == doctest::Approx(2.0 * t1[3]).epsilon(1e-12));
  CHECK(t2[0] == t1[0]);
  CHECK(t2[1] == t1[1]);
  CHECK(t2[2] == t1[2]);
}

TEST_CASE("gradient of the multiplier term matches finite differences") {
  Rng rng(707);
  for (int trial = 0; trial < 10; ++trial) {
    Instance inst = random_instance(rng);
    const auto analytic = grad_f_terms(inst.nn, inst.sectors, inst.vars, inst.y, 0.0);
    const auto fd = fd_gradient(inst.nn, [&](const NnController& m) {
      const auto [r, norm] = penalty_residual(assemble_n(m), inst.sectors, inst.vars);
      (void)norm;
      return (inst.y.transpose() * r).trace();
    });
    CHECK(max_rel_err(analytic, fd) <= 1e-5);
  }
}

TEST_CASE("gradient of the penalty term matches finite differences") {
  Rng rng(709);
  for (int trial = 0; trial < 10; ++trial) {
    Instance inst = random_instance(rng);
    const double rho = uniform(rng, 0.5, 3.0);
    const Matrix y0 = Matrix::Zero(inst.y.rows(), inst.y.cols());
    const auto analytic = grad_f_terms(inst.nn, inst.sectors, inst.vars, y0, rho);
    const auto fd = fd_gradient(inst.nn, [&](const NnController& m) {
      const auto [r, norm] = penalty_residual(assemble_n(m), inst.sectors, inst.vars);
      (void)r;
      return 0.5 * rho * norm * norm;
    });
    CHECK(max_rel_err(analytic, fd) <= 1e-5);
  }
}

TEST_CASE("n_update: zero learning rate leaves the network unchanged") {
  Rng rng(711);
  Instance inst = random_instance(rng);
  AdmmConfig cfg = test_cfg(1.0, 10.0, 1.0);
  cfg.n_update_epochs = 1;
  cfg.adam.rate = 0.0;
  const NnController out = n_update(inst.nn, inst.vars, inst.y, cfg, inst.data, inst.sectors);
  for (size_t i = 0; i < out.weights.size(); ++i)
    CHECK((out.weights[i] - inst.nn.weights[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("n_update: degenerate config reduces to imitation training") {
  Rng rng(713);
  // expert is a linear gain; rho = 0 and Y = 0 remove the coupling terms
  const LinearGain gain{random_matrix(rng, 1, 2)};
  Instance inst = random_instance(rng);
  for (auto& [x, u] : inst.data) u = -gain.k * x;
  const Matrix y0 = Matrix::Zero(inst.y.rows(), inst.y.cols());
  AdmmConfig cfg = test_cfg(0.0, 1.0, 1.0);
  cfg.n_update_epochs = 150;
  cfg.adam.rate = 5e-3;
  const double before = mse_loss(inst.nn, inst.data);
  const NnController out = n_update(inst.nn, inst.vars, y0, cfg, inst.data, inst.sectors);
  CHECK(mse_loss(out, inst.data) < before);
}

TEST_CASE("n_update returns the best-of-epochs iterate") {
  Rng rng(715);
  Instance inst = random_instance(rng);
  AdmmConfig cfg = test_cfg(1.0, 50.0, 1.0);
  cfg.n_update_epochs = 40;
  cfg.adam.rate = 2e-3;
  const NnController out = n_update(inst.nn, inst.vars, inst.y, cfg, inst.data, inst.sectors);
  const double out_loss = augmented_loss(out, inst.vars, inst.y, cfg, inst.data, inst.sectors);
  const double in_loss =
      augmented_loss(inst.nn, inst.vars, inst.y, cfg, inst.data, inst.sectors);
  CHECK(out_loss <= in_loss + 1e-12);
}

TEST_CASE("y_update examples") {
  Rng rng(717);
  const Matrix y = random_matrix(rng, 3, 4);
  const Matrix zero = Matrix::Zero(3, 4);
  CHECK((y_update(y, 2.0, zero) - y).cwiseAbs().maxCoeff() == 0.0);

  const Matrix r = random_matrix(rng, 3, 4);
  CHECK((y_update(zero, 1.0, r) - r).cwiseAbs().maxCoeff() == 0.0);
  CHECK((y_update(y_update(zero, 2.0, r), 2.0, r) - 4.0 * r).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("sector hash changes with the weights") {
  Rng rng(719);
  const NnController a = random_net(rng, 2, {4}, 1);
  const NnController b = random_net(rng, 2, {4}, 1);
  const Vector lo = Vector::Constant(2, -1), hi = Vector::Ones(2);
  const auto ba = propagate_bounds(a, lo, hi);
  const auto bb = propagate_bounds(b, lo, hi);
  const auto sa = local_sectors(ba, Activation::Tanh, 0.01);
  const auto sb = local_sectors(bb, Activation::Tanh, 0.01);
  CHECK(sector_hash(ba, sa) == sector_hash(ba, sa));
  CHECK(sector_hash(ba, sa) != sector_hash(bb, sb));
}

TEST_CASE("end-to-end run on GTM: history bookkeeping and certification") {
  const LtiPlant gtm = make_gtm();
  const Polytope box = make_gtm_box();
  AdmmConfig cfg = test_cfg(1.0, 100.0, 5.0);
  cfg.sigma = 0.03;
  cfg.max_outer_iters = 20;
  cfg.n_update_epochs = 150;
  cfg.pretrain_epochs = 500;
  cfg.adam.rate = 2e-3;
  cfg.seed = 5;

  const LinearGain gain = dlqr(gtm, SymMatrix::identity(2), SymMatrix::identity(1));
  const Dataset data = generate_grid_dataset(gain, box, 9);
  const NnController init = init_nn(2, {4, 4}, 1, Activation::Tanh, cfg.seed);

  std::ostringstream log;
  const RunResult result = run(cfg, gtm, box, data, init, &log);

  CHECK(result.state.history.size() == static_cast<size_t>(result.state.iteration));
  CHECK(!result.state.history.empty());
  for (size_t i = 0; i < result.state.history.size(); ++i)
    CHECK(result.state.history[i].iter == static_cast<int>(i));
  if (result.state.converged)
    CHECK(result.state.history.back().residual_f <= result.state.sigma_used);

  REQUIRE(result.certificate.has_value());
  const auto check = check_certificate(*result.certificate, gtm, box, result.nn, 50, 2000,
                                       1e-3, 99);
  CHECK(check.lmi_ok);
  CHECK(check.safety_ok);
  CHECK(check.rollouts_ok);

  // determinism: identical config and seed reproduce the history exactly
  std::ostringstream log2;
  const RunResult again = run(cfg, gtm, box, data, init, &log2);
  REQUIRE(again.state.history.size() == result.state.history.size());
  for (size_t i = 0; i < result.state.history.size(); ++i) {
    CHECK(again.state.history[i].residual_f == result.state.history[i].residual_f);
    CHECK(again.state.history[i].mse == result.state.history[i].mse);
    CHECK(again.state.history[i].sector_hash == result.state.history[i].sector_hash);
  }
}

TEST_CASE("history csv and certificate json artifacts") {
  Rng rng(721);
  AdmmState state{random_net(rng, 2, {3}, 1),
                  SynthesisVars{SymMatrix::identity(2), Vector::Ones(3), Matrix::Zero(1, 2),
                                Matrix::Zero(1, 3), Matrix::Zero(3, 2), Matrix::Zero(3, 3)},
                  Matrix::Zero(4, 5),
                  2,
                  {{0, 0.5, 0.6, 0.1, 1.0, 17, 11u}, {1, 0.2, 0.3, 0.05, 1.2, 12, 12u}},
                  true,
                  0.25};
  const auto dir = std::filesystem::temp_directory_path();
  const std::string hist = (dir / "safeil_history.csv").string();
  write_history_csv(state, hist);
  std::ifstream in(hist);
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,residual_F,residual_paper_form,mse,logdet_q1,newton_iters");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  std::filesystem::remove(hist);

  Certificate cert{random_pd(rng, 2), Vector::Ones(3), 1e-6, Vector::Ones(2), -0.3};
  const std::string cpath = (dir / "safeil_cert.json").string();
  write_certificate_json(cert, cpath);
  const Certificate back = load_certificate_json(cpath);
  CHECK((back.p.mat() - cert.p.mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.stability_margin == cert.stability_margin);
  CHECK(back.logdet_q1 == cert.logdet_q1);
  std::filesystem::remove(cpath);
}

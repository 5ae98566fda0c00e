#include "safeil/admm.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace safeil {

void AdmmConfig::validate() const {
  require(rho > 0.0, "AdmmConfig: rho must be > 0");
  require(eta1 > 0.0 && eta2 > 0.0, "AdmmConfig: eta1, eta2 must be > 0");
  require(max_outer_iters >= 1, "AdmmConfig: max_outer_iters must be >= 1");
  require(n_update_epochs >= 1, "AdmmConfig: n_update_epochs must be >= 1");
  require(pretrain_epochs >= 0, "AdmmConfig: pretrain_epochs must be >= 0");
  require(adam.rate >= 0.0, "AdmmConfig: adam rate must be >= 0");
  require(cert_shift >= 0.0, "AdmmConfig: cert_shift must be >= 0");
}

std::uint64_t sector_hash(const IntervalBounds& b, const SectorBounds& s) {
  // FNV-1a over the raw bytes of the frozen bound/sector vectors
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const Vector& v) {
    for (int i = 0; i < v.size(); ++i) {
      std::uint64_t bits;
      const double value = v(i);
      std::memcpy(&bits, &value, sizeof bits);
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffull;
        h *= 1099511628211ull;
      }
    }
  };
  mix(b.v_lo);
  mix(b.v_hi);
  mix(s.alpha);
  mix(s.beta);
  return h;
}

double augmented_loss(const NnController& nn, const SynthesisVars& q, const Matrix& y,
                      const AdmmConfig& cfg, const DataPairs& data, const SectorBounds& sectors,
                      double* terms) {
  const auto [residual, norm] = penalty_residual(assemble_n(nn), sectors, q);
  const double t0 = cfg.eta1 * mse_loss(nn, data);
  const double t1 = -cfg.eta2 * logdet_pd(q.q1);
  const double t2 = (y.transpose() * residual).trace();
  const double t3 = 0.5 * cfg.rho * norm * norm;
  if (terms) {
    terms[0] = t0;
    terms[1] = t1;
    terms[2] = t2;
    terms[3] = t3;
  }
  return t0 + t1 + t2 + t3;
}

std::vector<Matrix> grad_f_terms(const NnController& nn, const SectorBounds& sectors,
                                 const SynthesisVars& q, const Matrix& y, double rho) {
  const WeightMatrixN n = assemble_n(nn);
  const auto sizes = nn.layer_sizes();
  const auto work = loop_transform_with_work(n, sectors, sizes);

  const int n_g = q.q1.dim();
  const int n_u = static_cast<int>(q.l1.rows());
  const int n_phi = static_cast<int>(q.q2.size());

  const auto [residual, norm] = penalty_residual(n, sectors, q);
  (void)norm;
  // d/dF of tr(Y^T F Q) + rho/2 ||F Q - L||_F^2  =  (Y + rho (F Q - L)) Q
  Matrix gbar_full = y + rho * residual;
  Matrix gbar(gbar_full.rows(), gbar_full.cols());
  gbar.leftCols(n_g) = gbar_full.leftCols(n_g) * q.q1.mat();
  gbar.rightCols(n_phi) = gbar_full.rightCols(n_phi) * q.q2.asDiagonal();

  const TransformedNn gbar_blocks = tilde_from_matrix(gbar, n_u, n_g, n_phi);
  const WeightMatrixN gn = loop_transform_adjoint(n, sectors, work, gbar_blocks);

  // slice the block gradients back onto the trainable weight matrices
  const int ell = static_cast<int>(sizes.size());
  std::vector<int> offsets(ell + 1, 0);
  for (int i = 0; i < ell; ++i) offsets[i + 1] = offsets[i] + sizes[i];

  std::vector<Matrix> grads;
  grads.reserve(nn.weights.size());
  grads.push_back(gn.n_vx.topRows(sizes[0]));
  for (int i = 1; i < ell; ++i)
    grads.push_back(gn.n_vw.block(offsets[i], offsets[i - 1], sizes[i], sizes[i - 1]));
  grads.push_back(gn.n_uw.rightCols(sizes[ell - 1]));
  return grads;
}

NnController n_update(const NnController& nn, const SynthesisVars& q, const Matrix& y,
                      const AdmmConfig& cfg, const DataPairs& data, const SectorBounds& sectors) {
  NnController current = nn;
  AdamState adam = AdamState::init(current, cfg.adam);

  NnController best = current;
  double best_loss = augmented_loss(current, q, y, cfg, data, sectors);
  require(std::isfinite(best_loss), "n_update: non-finite augmented loss at start");

  for (int epoch = 0; epoch < cfg.n_update_epochs; ++epoch) {
    std::vector<Matrix> grad = grad_mse(current, data);
    for (auto& g : grad) g *= cfg.eta1;
    const std::vector<Matrix> gf = grad_f_terms(current, sectors, q, y, cfg.rho);
    for (size_t i = 0; i < grad.size(); ++i) grad[i] += gf[i];

    auto [next_state, next_nn] = adam_step(std::move(adam), current, grad);
    adam = std::move(next_state);
    current = std::move(next_nn);

    double terms[4];
    const double loss = augmented_loss(current, q, y, cfg, data, sectors, terms);
    if (!std::isfinite(loss)) {
      std::string bad = "aug";
      for (int t = 0; t < 4; ++t)
        if (!std::isfinite(terms[t])) bad = std::vector<std::string>{
            "imitation", "volume", "multiplier", "penalty"}[static_cast<size_t>(t)];
      throw Error("n_update: non-finite loss (" + bad + " term) at epoch " +
                  std::to_string(epoch));
    }
    if (loss < best_loss) {
      best_loss = loss;
      best = current;
    }
  }
  return best;  // lowest augmented loss over the epochs
}

std::pair<SynthesisVars, SolverReport> ql_update(const NnController& nn,
                                                 const SectorBounds& sectors, const Matrix& y,
                                                 const AdmmConfig& cfg, const LtiPlant& plant,
                                                 const Polytope& poly,
                                                 const std::optional<SynthesisVars>& warm) {
  return solve_ql_update(plant, poly, assemble_n(nn), sectors, y, cfg.rho, cfg.eta2, warm,
                         cfg.sdp);
}

Matrix y_update(const Matrix& y, double rho, const Matrix& residual) {
  return y + rho * residual;
}

namespace {

struct FrozenSectors {
  IntervalBounds bounds;
  SectorBounds sectors;
  std::uint64_t hash;
};

FrozenSectors freeze_sectors(const NnController& nn, const Vector& x_lo, const Vector& x_hi) {
  FrozenSectors f{propagate_bounds(nn, x_lo, x_hi), SectorBounds{}, 0};
  f.sectors = local_sectors(f.bounds, nn.activation, nn.leak);
  f.hash = sector_hash(f.bounds, f.sectors);
  return f;
}

std::optional<Certificate> certify_final(const NnController& nn, const LtiPlant& plant,
                                         const Polytope& poly, const Vector& x_lo,
                                         const Vector& x_hi, const AdmmConfig& cfg,
                                         std::ostream* log) {
  const auto frozen = freeze_sectors(nn, x_lo, x_hi);
  const TransformedNn tilde = loop_transform(assemble_n(nn), frozen.sectors);

  for (double shift : {cfg.cert_shift, cfg.cert_shift * 100.0}) {
    const CertificationResult cert = solve_certification(plant, poly, tilde, shift, cfg.sdp);
    if (!cert.feasible) return std::nullopt;
    const SymMatrix p = symmetrize(solve_pd(*cert.q1, Matrix::Identity(cert.q1->dim(), cert.q1->dim())));
    const Vector lambda = cert.q2.cwiseInverse();
    const SymMatrix lhs = assemble_transformed(plant, tilde, AnalysisCertificate(p, lambda));
    const double margin = min_eig_sym(symmetrize(-lhs.mat()), kEigTolerance);
    const Vector slacks = safety_rows(*cert.q1, poly);
    if (margin >= kFeasibilityMargin && (slacks.array() >= 0.0).all()) {
      Certificate out{p, lambda, margin, slacks, logdet_pd(*cert.q1)};
      return out;
    }
    if (log)
      *log << "# certification margin " << margin << " below threshold, retrying with shift "
           << shift * 100.0 << "\n";
  }
  return std::nullopt;
}

}  // namespace

RunResult run(const AdmmConfig& cfg, const LtiPlant& plant, const Polytope& poly,
              const Dataset& data, const NnController& init_nn, std::ostream* log) {
  cfg.validate();
  require(!data.pairs.empty(), "run: dataset is empty");
  init_nn.validate();
  require(init_nn.input_dim() == plant.state_dim() && init_nn.output_dim() == plant.input_dim(),
          "run: network dimensions do not match the plant");

  const auto [x_lo, x_hi] = bounding_box(poly);

  NnController nn = init_nn;
  if (cfg.pretrain_epochs > 0) {
    AdamState adam = AdamState::init(nn, cfg.adam);
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
      auto [next_state, next_nn] = adam_step(std::move(adam), nn, grad_mse(nn, data.pairs));
      adam = std::move(next_state);
      nn = std::move(next_nn);
    }
    if (log) *log << "# pretrain done, mse " << mse_loss(nn, data.pairs) << "\n";
  }

  // initial (Q0, L0) against f(N0) with zero multiplier
  auto frozen = freeze_sectors(nn, x_lo, x_hi);
  const int n_phi = nn.phi_dim();
  Matrix y = Matrix::Zero(plant.input_dim() + n_phi, plant.state_dim() + n_phi);
  auto [q, report0] = ql_update(nn, frozen.sectors, y, cfg, plant, poly, std::nullopt);

  double sigma = cfg.sigma;
  if (sigma <= 0.0) {
    const Matrix f0 = tilde_as_matrix(loop_transform(assemble_n(nn), frozen.sectors));
    Matrix f0q(f0.rows(), f0.cols());
    f0q.leftCols(plant.state_dim()) = f0.leftCols(plant.state_dim()) * q.q1.mat();
    f0q.rightCols(n_phi) = f0.rightCols(n_phi) * q.q2.asDiagonal();
    sigma = 0.1 * f0q.norm();
  }

  AdmmState state{nn, q, y, 0, {}, false, sigma};

  NnController best_nn = nn;
  std::optional<SynthesisVars> best_q = q;
  double best_residual = std::numeric_limits<double>::infinity();

  for (int k = 0; k < cfg.max_outer_iters; ++k) {
    frozen = freeze_sectors(state.nn, x_lo, x_hi);  // recomputed once, frozen for this iteration

    state.nn = n_update(state.nn, state.q, state.y, cfg, data.pairs, frozen.sectors);
    auto [q_next, report] = ql_update(state.nn, frozen.sectors, state.y, cfg, plant, poly, state.q);
    state.q = std::move(q_next);

    const WeightMatrixN n_mat = assemble_n(state.nn);
    const auto [residual, resid_f] = penalty_residual(n_mat, frozen.sectors, state.q);
    const double resid_paper = paper_residual(n_mat, frozen.sectors, state.q);

    IterationRecord rec;
    rec.iter = k;
    rec.residual_f = resid_f;
    rec.residual_paper = resid_paper;
    rec.mse = mse_loss(state.nn, data.pairs);
    rec.logdet_q1 = logdet_pd(state.q.q1);
    rec.newton_iters = report.iterations;
    rec.sector_hash = frozen.hash;
    state.history.push_back(rec);
    state.iteration = k + 1;
    if (log)
      *log << "iter " << k << " residual_F " << resid_f << " paper " << resid_paper << " mse "
           << rec.mse << " logdet " << rec.logdet_q1 << " newton " << rec.newton_iters << "\n";

    if (resid_f < best_residual) {
      best_residual = resid_f;
      best_nn = state.nn;
      best_q = state.q;
    }
    if (resid_f <= sigma) {
      state.converged = true;
      break;
    }
    state.y = y_update(state.y, cfg.rho, residual);
  }

  if (!state.converged) {
    state.nn = best_nn;  // best residual iterate when sigma was not reached
    state.q = *best_q;
  }

  RunResult result{state.nn, certify_final(state.nn, plant, poly, x_lo, x_hi, cfg, log),
                   std::move(state)};
  return result;
}

CertificateCheck check_certificate(const Certificate& cert, const LtiPlant& plant,
                                   const Polytope& poly, const NnController& nn, int num_rollouts,
                                   int k_max, double stop_norm, std::uint64_t seed) {
  CertificateCheck check;
  check.lmi_ok = cert.stability_margin >= kFeasibilityMargin;
  check.safety_ok = (cert.safety_slacks.array() >= 0.0).all();

  const auto samples = sample_in_ellipsoid(Ellipsoid(cert.p), num_rollouts, seed);
  const ControlLaw law = [&nn](const Vector& x) { return forward(nn, x); };
  check.rollouts_ok = true;
  for (const auto& x0 : samples) {
    const Trajectory traj = simulate(plant, law, x0, k_max, stop_norm);
    bool ok = !traj.diverged && traj.states.back().norm() <= stop_norm;
    if (ok)
      for (const auto& x : traj.states)
        if (!contains(poly, x)) {
          ok = false;
          break;
        }
    if (!ok) {
      check.rollouts_ok = false;
      ++check.rollout_failures;
    }
  }
  return check;
}

void write_history_csv(const AdmmState& state, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_history_csv: cannot open '" + path + "'");
  out << "iter,residual_F,residual_paper_form,mse,logdet_q1,newton_iters\n";
  char buf[256];
  for (const auto& r : state.history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%d\n", r.iter, r.residual_f,
                  r.residual_paper, r.mse, r.logdet_q1, r.newton_iters);
    out << buf;
  }
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  require(rows > 0, "matrix_from_json: empty matrix");
  const int cols = static_cast<int>(j.at(0).size());
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

}  // namespace

void write_certificate_json(const Certificate& cert, const std::string& path) {
  nlohmann::json j;
  j["p"] = matrix_to_json(cert.p.mat());
  j["lambda"] = std::vector<double>(cert.lambda.data(), cert.lambda.data() + cert.lambda.size());
  j["margins"]["stability"] = cert.stability_margin;
  j["margins"]["safety_slacks"] = std::vector<double>(
      cert.safety_slacks.data(), cert.safety_slacks.data() + cert.safety_slacks.size());
  j["logdet_q1"] = cert.logdet_q1;
  std::ofstream out(path);
  require(out.good(), "write_certificate_json: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

Certificate load_certificate_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_certificate_json: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_certificate_json: parse error: " + std::string(e.what()));
  }
  try {
    const Matrix p = matrix_from_json(j.at("p"));
    const auto lam = j.at("lambda").get<std::vector<double>>();
    const auto slacks = j.at("margins").at("safety_slacks").get<std::vector<double>>();
    Certificate cert{SymMatrix(p), Eigen::Map<const Vector>(lam.data(), lam.size()),
                     j.at("margins").at("stability").get<double>(),
                     Eigen::Map<const Vector>(slacks.data(), slacks.size()),
                     j.at("logdet_q1").get<double>()};
    return cert;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_certificate_json: malformed certificate: " + std::string(e.what()));
  }
}

}  // namespace safeil

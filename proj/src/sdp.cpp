#include "safeil/sdp.hpp"
#include <cstdio>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "safeil/expert.hpp"
#include "safeil/numerics.hpp"

namespace safeil {

namespace {
constexpr double kQ2Floor = 1e-9;  // lambda_i >= 1e-9 on the synthesis path
constexpr double kQ2Cap = 1e9;
}  // namespace

// ---------------------------------------------------------------------------
// AffineMatrixMap
// ---------------------------------------------------------------------------

AffineMatrixMap AffineMatrixMap::zero(int d) {
  AffineMatrixMap m;
  m.dim = d;
  m.s0 = Matrix::Zero(d, d);
  return m;
}

void AffineMatrixMap::add(int var, int row, int col, double coeff) {
  if (coeff == 0.0) return;
  for (auto& [v, entries] : coeffs) {
    if (v == var) {
      entries.push_back({row, col, coeff});
      return;
    }
  }
  coeffs.push_back({var, {{row, col, coeff}}});
}

void AffineMatrixMap::add_sym(int var, int row, int col, double coeff) {
  add(var, row, col, coeff);
  if (row != col) add(var, col, row, coeff);
}

void AffineMatrixMap::finalize() {
  for (auto& [v, entries] : coeffs) {
    std::map<std::pair<int, int>, double> acc;
    for (const auto& e : entries) acc[{e.row, e.col}] += e.coeff;
    entries.clear();
    for (const auto& [rc, c] : acc)
      if (c != 0.0) entries.push_back({rc.first, rc.second, c});
  }
  std::sort(coeffs.begin(), coeffs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
}

Matrix AffineMatrixMap::eval(const Vector& x) const {
  Matrix s = s0;
  for (const auto& [var, entries] : coeffs) {
    const double xv = x(var);
    if (xv == 0.0) continue;
    for (const auto& e : entries) s(e.row, e.col) += xv * e.coeff;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Barrier solver internals
// ---------------------------------------------------------------------------

namespace {

double logdet_from_chol(const Matrix& l) {
  double acc = 0.0;
  for (int i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
  return 2.0 * acc;
}

std::optional<std::vector<Matrix>> factor_blocks(const BarrierProblem& p, const Vector& x,
                                                 double shift) {
  std::vector<Matrix> chols;
  chols.reserve(p.blocks.size());
  for (const auto& blk : p.blocks) {
    Matrix s = blk.eval(x);
    if (shift != 0.0) s.diagonal().array() -= shift;
    auto l = cholesky(symmetrize(s));
    if (!l) return std::nullopt;
    chols.push_back(std::move(*l));
  }
  return chols;
}

double objective_weight(const BarrierProblem& p, int block) {
  double w = 0.0;
  for (const auto& t : p.logdet_terms)
    if (t.block == block) w += t.weight;
  return w;
}

double base_objective(const BarrierProblem& p, const Vector& x) {
  double f = 0.0;
  if (p.lin.size() > 0) f += p.lin.dot(x);
  if (p.quad.size() > 0) f += 0.5 * x.dot(p.quad * x);
  return f;
}

double smooth_objective(const BarrierProblem& p, const Vector& x,
                        const std::vector<Matrix>& chols) {
  double f = base_objective(p, x);
  for (const auto& t : p.logdet_terms) f -= t.weight * logdet_from_chol(chols[t.block]);
  return f;
}

double merit(const BarrierProblem& p, const Vector& x, const std::vector<Matrix>& chols,
             double mu) {
  double f = base_objective(p, x);
  for (size_t b = 0; b < p.blocks.size(); ++b)
    f -= (mu + objective_weight(p, static_cast<int>(b))) * logdet_from_chol(chols[b]);
  if (p.mu_reg_weight.size() > 0) {
    const Vector d = x - p.mu_reg_center;
    f += 0.5 * mu * d.dot(p.mu_reg_weight.cwiseProduct(d));
  }
  return f;
}

void accumulate_block(const AffineMatrixMap& blk, const Matrix& sinv, double weight, Vector& g,
                      Matrix& h) {
  const auto& groups = blk.coeffs;
  const int k = static_cast<int>(groups.size());
  for (const auto& [var, entries] : groups) {
    double tr = 0.0;
    for (const auto& e : entries) tr += e.coeff * sinv(e.row, e.col);
    g(var) -= weight * tr;
  }
  for (int a = 0; a < k; ++a) {
    const auto& [va, ea] = groups[a];
    for (int b = a; b < k; ++b) {
      const auto& [vb, eb] = groups[b];
      double acc = 0.0;
      for (const auto& e : ea)
        for (const auto& f : eb) acc += e.coeff * f.coeff * sinv(e.col, f.row) * sinv(f.col, e.row);
      const double val = weight * acc;
      h(va, vb) += val;
      if (a != b) h(vb, va) += val;
    }
  }
}

struct CenterOutcome {
  bool ok = true;
  bool early = false;
  double grad_norm = 0.0;
  std::string message;
};

/// Buffers reused across all Newton iterations of one solve.
struct NewtonWorkspace {
  Matrix h;
  Vector g, scale, delta, trial;
  Eigen::LLT<Matrix> llt;
  Matrix sinv;
};

CenterOutcome center(const BarrierProblem& p, Vector& x, std::vector<Matrix>& chols, double mu,
                     double extra_exit_threshold, const SolverParams& prm, int& newton_total,
                     NewtonWorkspace& ws, const std::function<bool(const Vector&)>& stop_early) {
  const int n = p.num_vars;
  CenterOutcome out;
  int stagnant = 0;
  for (int iter = 0; iter < prm.max_newton_per_stage; ++iter) {
    if (newton_total >= prm.max_newton_total) {
      out.ok = false;
      out.message = "Newton iteration budget exhausted";
      return out;
    }
    ws.g.setZero(n);
    if (p.lin.size() > 0) ws.g += p.lin;
    if (p.quad.size() > 0) ws.g.noalias() += p.quad * x;
    if (p.quad.size() > 0)
      ws.h = p.quad;
    else
      ws.h.setZero(n, n);
    if (p.mu_reg_weight.size() > 0) {
      ws.g += mu * p.mu_reg_weight.cwiseProduct(x - p.mu_reg_center);
      ws.h.diagonal() += mu * p.mu_reg_weight;
    }
    for (size_t b = 0; b < p.blocks.size(); ++b) {
      const double w = mu + objective_weight(p, static_cast<int>(b));
      const int d = static_cast<int>(chols[b].rows());
      ws.sinv = Matrix::Identity(d, d);
      chols[b].triangularView<Eigen::Lower>().solveInPlace(ws.sinv);
      chols[b].transpose().triangularView<Eigen::Upper>().solveInPlace(ws.sinv);
      ws.sinv = 0.5 * (ws.sinv + ws.sinv.transpose()).eval();
      accumulate_block(p.blocks[b], ws.sinv, w, ws.g, ws.h);
    }
    out.grad_norm = ws.g.norm();

    // Newton direction, solved in a Jacobi-scaled space (the variables mix
    // curvatures across many orders of magnitude), with a ridge fallback
    ws.scale.resize(n);
    for (int i = 0; i < n; ++i) ws.scale(i) = 1.0 / std::sqrt(std::max(ws.h(i, i), 1e-14));
    for (int j = 0; j < n; ++j)  // scale the Hessian in place
      for (int i = 0; i < n; ++i) ws.h(i, j) *= ws.scale(i) * ws.scale(j);
    const Vector gs = ws.scale.cwiseProduct(ws.g);
    double ridge = 0.0;
    for (;;) {
      ws.llt.compute(ws.h);
      if (ws.llt.info() == Eigen::Success) {
        ws.delta = ws.scale.cwiseProduct(ws.llt.solve(-gs));
        break;
      }
      const double bump = ridge == 0.0 ? 1e-12 : ridge * 100.0 - ridge;
      ws.h.diagonal().array() += bump;
      ridge = ridge == 0.0 ? 1e-12 : ridge * 100.0;
      if (ridge > 1e12) {
        out.ok = false;
        out.message = "Newton system could not be factorized";
        return out;
      }
    }

    const double fcur = merit(p, x, chols, mu);
    const double slope = ws.g.dot(ws.delta);  // negative for a descent direction
    const double decrement = -slope;
    // the decrement is affine invariant; intermediate stages only center
    // until the quadratic-convergence region is reached
    if (decrement * 0.5 <= std::max(extra_exit_threshold, prm.center_tol * (1.0 + std::abs(fcur))))
      return out;

    double alpha = 1.0;
    bool accepted = false;
    double achieved = 0.0;
    while (alpha >= prm.min_step) {
      const Vector trial = x + alpha * ws.delta;
      auto trial_chols = factor_blocks(p, trial, 0.0);
      if (trial_chols.has_value()) {
        const double ftrial = merit(p, trial, *trial_chols, mu);
        if (ftrial <= fcur + prm.armijo * alpha * slope) {
          achieved = fcur - ftrial;
          x = trial;
          chols = std::move(*trial_chols);
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    ++newton_total;
    if (prm.verbosity > 0)
      std::printf("  [sdp] mu %.1e iter %d F %.9e dec %.3e step %.3e ridge %.1e\n", mu,
                  newton_total, fcur, decrement, accepted ? alpha : 0.0, ridge);
    if (!accepted) {
      // backtracking bottomed out at floating-point resolution; the point is
      // numerically centered unless the decrement is still substantial
      if (decrement * 0.5 >
          std::max(2.0 * extra_exit_threshold, 1e-6 * (1.0 + std::abs(fcur)))) {
        out.ok = false;
        out.message = "line search collapse (step < min_step)";
      }
      return out;
    }
    if (achieved <= 1e-13 * (1.0 + std::abs(fcur))) {
      if (++stagnant >= 2) return out;  // numerically centered
    } else {
      stagnant = 0;
    }
    if (stop_early && stop_early(x)) {
      out.early = true;
      return out;
    }
  }
  return out;  // per-stage cap hit: accept current center and move on
}

std::pair<Vector, SolverReport> run_barrier(const BarrierProblem& p, const Vector& x0,
                                            const SolverParams& prm,
                                            const std::function<bool(const Vector&)>& stop_early) {
  require(p.num_vars > 0 && x0.size() == p.num_vars, "barrier_newton: bad variable layout");
  if (p.lin.size() > 0)
    require(p.lin.size() == p.num_vars, "barrier_newton: linear term size mismatch");
  if (p.quad.size() > 0)
    require(p.quad.rows() == p.num_vars && p.quad.cols() == p.num_vars,
            "barrier_newton: quadratic term size mismatch");
  for (const auto& t : p.logdet_terms)
    require(t.block >= 0 && t.block < static_cast<int>(p.blocks.size()),
            "barrier_newton: logdet term references unknown block");

  SolverReport report;
  Vector x = x0;
  auto chols = factor_blocks(p, x, 0.0);
  require(chols.has_value(), "barrier_newton: start point is not strictly feasible");

  int newton_total = 0;
  NewtonWorkspace ws;
  double mu = prm.mu_init;
  bool early = false;
  for (;;) {
    const bool final_stage = mu <= prm.mu_final * (1.0 + 1e-9);
    auto outcome = center(p, x, *chols, mu, final_stage ? 0.0 : 0.03, prm, newton_total, ws,
                          stop_early);
    report.final_grad_norm = outcome.grad_norm;
    report.final_mu = mu;
    if (!outcome.ok) {
      report.converged = false;
      report.message = outcome.message;
      break;
    }
    if (outcome.early) {
      report.converged = true;
      report.message = "early stop";
      early = true;
      break;
    }
    if (final_stage) {
      report.converged = true;
      break;
    }
    mu *= prm.mu_factor;
  }
  (void)early;
  report.iterations = newton_total;
  report.objective = smooth_objective(p, x, *chols);
  report.block_margins.clear();
  for (const auto& blk : p.blocks)
    report.block_margins.push_back(min_eig_sym(symmetrize(blk.eval(x)), kEigTolerance));
  return {x, report};
}

}  // namespace

bool strictly_feasible(const BarrierProblem& p, const Vector& x, double margin) {
  if (x.size() != p.num_vars) return false;
  if (!x.allFinite()) return false;
  return factor_blocks(p, x, margin).has_value();
}

std::pair<Vector, SolverReport> barrier_newton(const BarrierProblem& p, const Vector& x0,
                                               const SolverParams& params) {
  return run_barrier(p, x0, params, nullptr);
}

std::optional<Vector> phase_one(const BarrierProblem& p, const Vector& x0,
                                const SolverParams& params, SolverReport* report_out) {
  require(x0.size() == p.num_vars, "phase_one: start vector size mismatch");
  if (strictly_feasible(p, x0, params.feas_margin)) {
    if (report_out) {
      report_out->converged = true;
      report_out->message = "start already strictly feasible";
    }
    return x0;  // fast path
  }

  const int sv = p.num_vars;  // slack variable index
  BarrierProblem ext;
  ext.num_vars = p.num_vars + 1;
  ext.blocks = p.blocks;
  if (p.mu_reg_weight.size() > 0) {
    ext.mu_reg_weight = Vector::Zero(ext.num_vars);
    ext.mu_reg_center = Vector::Zero(ext.num_vars);
    ext.mu_reg_weight.head(p.num_vars) = p.mu_reg_weight;
    ext.mu_reg_center.head(p.num_vars) = p.mu_reg_center;
  }
  for (auto& blk : ext.blocks) {
    for (int i = 0; i < blk.dim; ++i) blk.add(sv, i, i, 1.0);
    blk.finalize();
  }
  // keep the slack bounded above so the barrier domain is well defined
  double s_start = 1.0;
  for (const auto& blk : p.blocks) {
    const double lam = min_eig_sym(symmetrize(blk.eval(x0)), 1e-6);
    s_start = std::max(s_start, -lam + 1.0);
  }
  AffineMatrixMap ub = AffineMatrixMap::zero(1);
  ub.s0(0, 0) = s_start + 1.0;
  ub.add(sv, 0, 0, -1.0);
  ub.finalize();
  ext.blocks.push_back(std::move(ub));
  ext.lin = Vector::Zero(ext.num_vars);
  ext.lin(sv) = 1.0;

  Vector xe(ext.num_vars);
  xe.head(p.num_vars) = x0;
  xe(sv) = s_start;

  const double target = -2.0 * params.feas_margin;
  auto stop = [&](const Vector& x) { return x(sv) <= target; };
  auto [xsol, report] = run_barrier(ext, xe, params, stop);
  if (report_out) *report_out = report;
  if (xsol(sv) <= -params.feas_margin) return Vector(xsol.head(p.num_vars));
  return std::nullopt;  // optimal slack >= 0: infeasible
}

void dump_sdpa(const BarrierProblem& p, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "dump_sdpa: cannot open '" + path + "'");
  out << "* safeil subproblem dump, SDPA-like sparse format\n";
  out << "* logdet objective terms:";
  for (const auto& t : p.logdet_terms) out << " (block " << t.block + 1 << ", w " << t.weight << ")";
  out << "\n* quadratic objective " << (p.quad.size() > 0 ? "present" : "absent") << "\n";
  out << p.num_vars << " = mDIM\n";
  out << p.blocks.size() << " = nBLOCK\n";
  for (const auto& blk : p.blocks) out << blk.dim << " ";
  out << "= bLOCKsTRUCT\n";
  for (int i = 0; i < p.num_vars; ++i)
    out << (p.lin.size() > 0 ? p.lin(i) : 0.0) << (i + 1 == p.num_vars ? "\n" : " ");
  char buf[160];
  for (size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    for (int i = 0; i < blk.dim; ++i)
      for (int j = i; j < blk.dim; ++j)
        if (blk.s0(i, j) != 0.0) {
          std::snprintf(buf, sizeof buf, "0 %zu %d %d %.17g\n", b + 1, i + 1, j + 1, blk.s0(i, j));
          out << buf;
        }
    for (const auto& [var, entries] : blk.coeffs)
      for (const auto& e : entries)
        if (e.row <= e.col) {
          std::snprintf(buf, sizeof buf, "%d %zu %d %d %.17g\n", var + 1, b + 1, e.row + 1,
                        e.col + 1, e.coeff);
          out << buf;
        }
  }
}

// ---------------------------------------------------------------------------
// Synthesis layout and problem builders
// ---------------------------------------------------------------------------

int SynthesisLayout::q1_index(int i, int j) const {
  require(0 <= i && i <= j && j < n_g, "q1_index: bad indices");
  return i * n_g - i * (i - 1) / 2 + (j - i);
}

Vector SynthesisLayout::pack(const SynthesisVars& v) const {
  Vector x = Vector::Zero(total_ql());
  for (int i = 0; i < n_g; ++i)
    for (int j = i; j < n_g; ++j) x(q1_index(i, j)) = v.q1(i, j);
  x.segment(q2_off(), n_phi) = v.q2;
  for (int a = 0; a < n_u; ++a)
    for (int b = 0; b < n_g; ++b) x(l1_off() + a * n_g + b) = v.l1(a, b);
  for (int a = 0; a < n_u; ++a)
    for (int b = 0; b < n_phi; ++b) x(l2_off() + a * n_phi + b) = v.l2(a, b);
  for (int a = 0; a < n_phi; ++a)
    for (int b = 0; b < n_g; ++b) x(l3_off() + a * n_g + b) = v.l3(a, b);
  for (int a = 0; a < n_phi; ++a)
    for (int b = 0; b < n_phi; ++b) x(l4_off() + a * n_phi + b) = v.l4(a, b);
  return x;
}

SynthesisVars SynthesisLayout::unpack(const Vector& x) const {
  require(x.size() == total_ql(), "unpack: size mismatch");
  Matrix q1(n_g, n_g);
  for (int i = 0; i < n_g; ++i)
    for (int j = i; j < n_g; ++j) q1(i, j) = q1(j, i) = x(q1_index(i, j));
  Matrix l1(n_u, n_g), l2(n_u, n_phi), l3(n_phi, n_g), l4(n_phi, n_phi);
  for (int a = 0; a < n_u; ++a)
    for (int b = 0; b < n_g; ++b) l1(a, b) = x(l1_off() + a * n_g + b);
  for (int a = 0; a < n_u; ++a)
    for (int b = 0; b < n_phi; ++b) l2(a, b) = x(l2_off() + a * n_phi + b);
  for (int a = 0; a < n_phi; ++a)
    for (int b = 0; b < n_g; ++b) l3(a, b) = x(l3_off() + a * n_g + b);
  for (int a = 0; a < n_phi; ++a)
    for (int b = 0; b < n_phi; ++b) l4(a, b) = x(l4_off() + a * n_phi + b);
  return SynthesisVars{SymMatrix(q1), x.segment(q2_off(), n_phi), std::move(l1), std::move(l2),
                       std::move(l3), std::move(l4)};
}

Vector SynthesisLayout::pack_cert(const SymMatrix& q1, const Vector& q2) const {
  Vector x = Vector::Zero(total_cert());
  for (int i = 0; i < n_g; ++i)
    for (int j = i; j < n_g; ++j) x(q1_index(i, j)) = q1(i, j);
  x.segment(q2_off(), n_phi) = q2;
  return x;
}

std::pair<SymMatrix, Vector> SynthesisLayout::unpack_cert(const Vector& x) const {
  require(x.size() == total_cert(), "unpack_cert: size mismatch");
  Matrix q1(n_g, n_g);
  for (int i = 0; i < n_g; ++i)
    for (int j = i; j < n_g; ++j) q1(i, j) = q1(j, i) = x(q1_index(i, j));
  return {SymMatrix(q1), x.segment(q2_off(), n_phi)};
}

AffineMatrixMap build_synthesis_lmi(const LtiPlant& plant, const SynthesisLayout& layout) {
  const int n_g = layout.n_g, n_u = layout.n_u, n_phi = layout.n_phi;
  const int n = n_g + n_phi;
  const Matrix& a = plant.a_g;
  const Matrix& b = plant.b_g;
  AffineMatrixMap m = AffineMatrixMap::zero(2 * n);

  for (int i = 0; i < n_g; ++i)
    for (int j = i; j < n_g; ++j) {
      const int var = layout.q1_index(i, j);
      m.add_sym(var, i, j, 1.0);          // (1,1) = Q1
      m.add_sym(var, n + i, n + j, 1.0);  // (3,3) = Q1
      // (3,1) = A Q1 (+ B L1 below), mirrored to (1,3)
      for (int r = 0; r < n_g; ++r) {
        if (i == j) {
          m.add_sym(var, n + r, i, a(r, i));
        } else {
          m.add_sym(var, n + r, j, a(r, i));
          m.add_sym(var, n + r, i, a(r, j));
        }
      }
    }
  for (int i = 0; i < n_phi; ++i) {
    const int var = layout.q2_off() + i;
    m.add(var, n_g + i, n_g + i, 1.0);          // (2,2) = Q2
    m.add(var, n + n_g + i, n + n_g + i, 1.0);  // (4,4) = Q2
  }
  for (int p2 = 0; p2 < n_u; ++p2)
    for (int c = 0; c < n_g; ++c) {
      const int var = layout.l1_off() + p2 * n_g + c;
      for (int r = 0; r < n_g; ++r) m.add_sym(var, n + r, c, b(r, p2));  // (3,1) += B L1
    }
  for (int p2 = 0; p2 < n_u; ++p2)
    for (int c = 0; c < n_phi; ++c) {
      const int var = layout.l2_off() + p2 * n_phi + c;
      for (int r = 0; r < n_g; ++r) m.add_sym(var, n + r, n_g + c, b(r, p2));  // (3,2) = B L2
    }
  for (int r = 0; r < n_phi; ++r)
    for (int c = 0; c < n_g; ++c)
      m.add_sym(layout.l3_off() + r * n_g + c, n + n_g + r, c, 1.0);  // (4,1) = L3
  for (int r = 0; r < n_phi; ++r)
    for (int c = 0; c < n_phi; ++c)
      m.add_sym(layout.l4_off() + r * n_phi + c, n + n_g + r, n_g + c, 1.0);  // (4,2) = L4
  m.finalize();
  return m;
}

AffineMatrixMap build_certification_lmi(const LtiPlant& plant, const TransformedNn& tilde,
                                        const SynthesisLayout& layout) {
  const int n_g = layout.n_g, n_phi = layout.n_phi;
  const int n = n_g + n_phi;
  const Matrix a_cl = plant.a_g + plant.b_g * tilde.n_ux;  // A + B Nt_ux
  const Matrix b_uz = plant.b_g * tilde.n_uz;
  const Matrix& vx = tilde.n_vx;
  const Matrix& vz = tilde.n_vz;
  AffineMatrixMap m = AffineMatrixMap::zero(2 * n);

  for (int i = 0; i < n_g; ++i)
    for (int j = i; j < n_g; ++j) {
      const int var = layout.q1_index(i, j);
      m.add_sym(var, i, j, 1.0);
      m.add_sym(var, n + i, n + j, 1.0);
      for (int r = 0; r < n_g; ++r) {  // (3,1) = (A + B Nt_ux) Q1
        if (i == j) {
          m.add_sym(var, n + r, i, a_cl(r, i));
        } else {
          m.add_sym(var, n + r, j, a_cl(r, i));
          m.add_sym(var, n + r, i, a_cl(r, j));
        }
      }
      for (int r = 0; r < n_phi; ++r) {  // (4,1) = Nt_vx Q1
        if (i == j) {
          m.add_sym(var, n + n_g + r, i, vx(r, i));
        } else {
          m.add_sym(var, n + n_g + r, j, vx(r, i));
          m.add_sym(var, n + n_g + r, i, vx(r, j));
        }
      }
    }
  for (int i = 0; i < n_phi; ++i) {
    const int var = layout.q2_off() + i;
    m.add(var, n_g + i, n_g + i, 1.0);
    m.add(var, n + n_g + i, n + n_g + i, 1.0);
    for (int r = 0; r < n_g; ++r) m.add_sym(var, n + r, n_g + i, b_uz(r, i));  // (3,2)
    for (int r = 0; r < n_phi; ++r) m.add_sym(var, n + n_g + r, n_g + i, vz(r, i));  // (4,2)
  }
  m.finalize();
  return m;
}

namespace {

AffineMatrixMap q1_positivity_block(const SynthesisLayout& layout) {
  AffineMatrixMap m = AffineMatrixMap::zero(layout.n_g);
  for (int i = 0; i < layout.n_g; ++i)
    for (int j = i; j < layout.n_g; ++j) m.add_sym(layout.q1_index(i, j), i, j, 1.0);
  m.finalize();
  return m;
}

void append_safety_rows(std::vector<AffineMatrixMap>& blocks, const Polytope& poly,
                        const SynthesisLayout& layout) {
  for (int r = 0; r < poly.num_rows(); ++r) {
    AffineMatrixMap row = AffineMatrixMap::zero(1);
    row.s0(0, 0) = poly.h_vec(r) * poly.h_vec(r);
    for (int i = 0; i < layout.n_g; ++i)
      for (int j = i; j < layout.n_g; ++j) {
        const double c = i == j ? -poly.h_mat(r, i) * poly.h_mat(r, i)
                                : -2.0 * poly.h_mat(r, i) * poly.h_mat(r, j);
        row.add(layout.q1_index(i, j), 0, 0, c);
      }
    row.finalize();
    blocks.push_back(std::move(row));
  }
}

void append_q2_bounds(std::vector<AffineMatrixMap>& blocks, const SynthesisLayout& layout) {
  for (int i = 0; i < layout.n_phi; ++i) {
    AffineMatrixMap lo = AffineMatrixMap::zero(1);
    lo.s0(0, 0) = -kQ2Floor;
    lo.add(layout.q2_off() + i, 0, 0, 1.0);
    lo.finalize();
    blocks.push_back(std::move(lo));
    AffineMatrixMap hi = AffineMatrixMap::zero(1);
    hi.s0(0, 0) = kQ2Cap;
    hi.add(layout.q2_off() + i, 0, 0, -1.0);
    hi.finalize();
    blocks.push_back(std::move(hi));
  }
}

}  // namespace

BarrierProblem build_ql_problem(const LtiPlant& plant, const Polytope& poly, const Matrix& f_mat,
                                const Matrix& y, double rho, double eta2,
                                const SynthesisLayout& layout) {
  const int n_g = layout.n_g, n_u = layout.n_u, n_phi = layout.n_phi;
  require(f_mat.rows() == n_u + n_phi && f_mat.cols() == n_g + n_phi,
          "build_ql_problem: f(N) dimension mismatch");
  require(y.rows() == n_u + n_phi && y.cols() == n_g + n_phi,
          "build_ql_problem: multiplier dimension mismatch");
  require(rho > 0.0 && eta2 >= 0.0, "build_ql_problem: need rho > 0, eta2 >= 0");

  BarrierProblem p;
  p.num_vars = layout.total_ql();
  p.blocks.push_back(build_synthesis_lmi(plant, layout));
  p.blocks.push_back(q1_positivity_block(layout));
  p.logdet_terms.push_back({1, eta2});
  append_safety_rows(p.blocks, poly, layout);
  append_q2_bounds(p.blocks, layout);
  // pin the otherwise unpriced multiplier directions during centering
  p.mu_reg_weight = Vector::Zero(p.num_vars);
  p.mu_reg_center = Vector::Zero(p.num_vars);
  for (int i = 0; i < layout.n_phi; ++i) {
    p.mu_reg_weight(layout.q2_off() + i) = 1.0;
    p.mu_reg_center(layout.q2_off() + i) = 1.0;
  }

  // residual R = f(N) Q - L is linear in the variables; build its Jacobian
  // rows, then lin = J^T vec(Y) and quad = rho J^T J
  p.lin = Vector::Zero(p.num_vars);
  p.quad = Matrix::Zero(p.num_vars, p.num_vars);
  std::vector<std::pair<int, double>> row;
  for (int r = 0; r < n_u + n_phi; ++r) {
    for (int c = 0; c < n_g + n_phi; ++c) {
      row.clear();
      if (c < n_g) {
        for (int k = 0; k < n_g; ++k)
          row.emplace_back(layout.q1_index(std::min(k, c), std::max(k, c)), f_mat(r, k));
        row.emplace_back(
            r < n_u ? layout.l1_off() + r * n_g + c : layout.l3_off() + (r - n_u) * n_g + c, -1.0);
      } else {
        const int j = c - n_g;
        row.emplace_back(layout.q2_off() + j, f_mat(r, n_g + j));
        row.emplace_back(
            r < n_u ? layout.l2_off() + r * n_phi + j : layout.l4_off() + (r - n_u) * n_phi + j,
            -1.0);
      }
      for (const auto& [v1, c1] : row) {
        p.lin(v1) += c1 * y(r, c);
        for (const auto& [v2, c2] : row) p.quad(v1, v2) += rho * c1 * c2;
      }
    }
  }
  return p;
}

BarrierProblem build_certification_problem(const LtiPlant& plant, const Polytope& poly,
                                           const TransformedNn& tilde,
                                           const SynthesisLayout& layout, double lmi_shift) {
  BarrierProblem p;
  p.num_vars = layout.total_cert();
  AffineMatrixMap big = build_certification_lmi(plant, tilde, layout);
  big.s0.diagonal().array() -= lmi_shift;
  p.blocks.push_back(std::move(big));
  p.blocks.push_back(q1_positivity_block(layout));
  p.logdet_terms.push_back({1, 1.0});
  append_safety_rows(p.blocks, poly, layout);
  append_q2_bounds(p.blocks, layout);
  p.mu_reg_weight = Vector::Zero(p.num_vars);
  p.mu_reg_center = Vector::Zero(p.num_vars);
  for (int i = 0; i < layout.n_phi; ++i) {
    p.mu_reg_weight(layout.q2_off() + i) = 1.0;
    p.mu_reg_center(layout.q2_off() + i) = 1.0;
  }
  return p;
}

namespace {

// Discrete Lyapunov solution X = A X A^T + I for Schur-stable A.
std::optional<Matrix> lyapunov_gramian(const Matrix& a, int max_iter = 20000) {
  const int n = static_cast<int>(a.rows());
  Matrix x = Matrix::Identity(n, n);
  for (int k = 0; k < max_iter; ++k) {
    Matrix next = a * x * a.transpose() + Matrix::Identity(n, n);
    const double diff = (next - x).cwiseAbs().maxCoeff();
    x = next;
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e14) return std::nullopt;  // unstable A
    if (diff <= 1e-12 * (1.0 + x.cwiseAbs().maxCoeff())) return x;
  }
  return std::nullopt;
}

// Scale a candidate Q1 so every safety row is strictly satisfied.
std::optional<Matrix> scale_into_polytope(const Matrix& q1, const Polytope& poly) {
  double tau = std::numeric_limits<double>::infinity();
  for (int i = 0; i < poly.num_rows(); ++i) {
    const Vector hi = poly.h_mat.row(i).transpose();
    const double quad = hi.dot(q1 * hi);
    if (quad <= 0.0) continue;
    tau = std::min(tau, poly.h_vec(i) * poly.h_vec(i) / quad);
  }
  if (!(tau > 0.0)) return std::nullopt;
  if (!std::isfinite(tau)) tau = 1.0;
  return Matrix(0.9 * tau * q1);
}

// Seed for the (Q,L)-update: LQR-stabilized closed loop with L2=L3=L4=0.
std::optional<Vector> stabilizing_seed(const LtiPlant& plant, const Polytope& poly,
                                       const SynthesisLayout& layout) {
  Matrix k;
  try {
    const int n_u = plant.input_dim();
    k = dlqr(plant, SymMatrix::identity(plant.state_dim()), SymMatrix::identity(n_u)).k;
  } catch (const Error&) {
    return std::nullopt;
  }
  const Matrix a_cl = plant.a_g - plant.b_g * k;
  auto gram = lyapunov_gramian(a_cl);
  if (!gram) return std::nullopt;
  auto q1 = scale_into_polytope(*gram, poly);
  if (!q1) return std::nullopt;
  SynthesisVars v{SymMatrix(*q1), Vector::Ones(layout.n_phi),
                  Matrix(-k * *q1), Matrix::Zero(layout.n_u, layout.n_phi),
                  Matrix::Zero(layout.n_phi, layout.n_g),
                  Matrix::Zero(layout.n_phi, layout.n_phi)};
  return layout.pack(v);
}

Vector generic_seed_ql(const Polytope& poly, const SynthesisLayout& layout) {
  Matrix q1 = Matrix::Identity(layout.n_g, layout.n_g);
  if (auto scaled = scale_into_polytope(q1, poly)) q1 = *scaled;
  SynthesisVars v{SymMatrix(q1), Vector::Ones(layout.n_phi),
                  Matrix::Zero(layout.n_u, layout.n_g), Matrix::Zero(layout.n_u, layout.n_phi),
                  Matrix::Zero(layout.n_phi, layout.n_g),
                  Matrix::Zero(layout.n_phi, layout.n_phi)};
  return layout.pack(v);
}

}  // namespace

std::pair<SynthesisVars, SolverReport> solve_ql_update(
    const LtiPlant& plant, const Polytope& poly, const WeightMatrixN& n_fixed,
    const SectorBounds& sectors, const Matrix& y, double rho, double eta2,
    const std::optional<SynthesisVars>& warm_start, const SolverParams& params) {
  SynthesisLayout layout{plant.state_dim(), plant.input_dim(),
                         static_cast<int>(sectors.alpha.size())};
  const Matrix f_mat = tilde_as_matrix(loop_transform(n_fixed, sectors));
  BarrierProblem problem = build_ql_problem(plant, poly, f_mat, y, rho, eta2, layout);

  auto cold_seed = [&]() {
    if (auto seed = stabilizing_seed(plant, poly, layout);
        seed && strictly_feasible(problem, *seed, params.feas_margin))
      return *seed;
    auto found = phase_one(problem,
                           stabilizing_seed(plant, poly, layout).value_or(
                               generic_seed_ql(poly, layout)),
                           params);
    require(found.has_value(),
            "(Q,L)-update: constraint set is infeasible (phase-I slack >= 0)");
    return *found;
  };

  std::optional<Vector> x0;
  if (warm_start.has_value()) {
    Vector xw = layout.pack(*warm_start);
    if (strictly_feasible(problem, xw, 0.0)) {
      // the previous solution hugs its binding constraints; retreat toward a
      // strictly interior point (the constraint set is convex, so the blend
      // stays feasible)
      xw = 0.9 * xw + 0.1 * cold_seed();
      if (strictly_feasible(problem, xw, params.feas_margin)) x0 = std::move(xw);
    }
  }
  const bool warm = x0.has_value();
  if (!x0) x0 = cold_seed();

  auto [x, report] = barrier_newton(problem, *x0, params);
  if (!report.converged && warm) {
    // a stale warm start can defeat the shortened schedule; fall back to the
    // full path from the cold seed
    std::tie(x, report) = barrier_newton(problem, cold_seed(), params);
  }
  require(report.converged, "(Q,L)-update: Newton failure: " + report.message);
  // interiority is maintained operationally (Cholesky succeeds on every
  // block); the measured margins carry the eigenvalue bisection tolerance
  require(strictly_feasible(problem, x, 0.0),
          "(Q,L)-update: solver returned a non-interior point");
  for (double margin : report.block_margins)
    require(margin > -kEigTolerance, "(Q,L)-update: block margin below tolerance");
  return {layout.unpack(x), report};
}

namespace {

CertificationResult solve_logdet_problem(BarrierProblem&& problem, const SynthesisLayout& layout,
                                         const Vector& seed, const SolverParams& params,
                                         bool cert_layout) {
  CertificationResult result;
  auto x0 = phase_one(problem, seed, params, &result.report);
  if (!x0) {
    result.feasible = false;
    result.report.message = "infeasible: phase-I slack could not reach below zero";
    return result;
  }
  auto [x, report] = barrier_newton(problem, *x0, params);
  result.report = report;
  if (!report.converged) {
    result.feasible = false;
    return result;
  }
  result.feasible = true;
  if (cert_layout) {
    auto [q1, q2] = layout.unpack_cert(x);
    result.q1 = std::move(q1);
    result.q2 = std::move(q2);
  } else {
    Matrix q1(layout.n_g, layout.n_g);
    for (int i = 0; i < layout.n_g; ++i)
      for (int j = i; j < layout.n_g; ++j) q1(i, j) = q1(j, i) = x(layout.q1_index(i, j));
    result.q1 = SymMatrix(q1);
  }
  return result;
}

}  // namespace

CertificationResult solve_certification(const LtiPlant& plant, const Polytope& poly,
                                        const TransformedNn& t_fixed, double lmi_shift,
                                        const SolverParams& params) {
  SynthesisLayout layout{plant.state_dim(), plant.input_dim(),
                         static_cast<int>(t_fixed.n_vz.rows())};
  BarrierProblem problem =
      build_certification_problem(plant, poly, t_fixed, layout, lmi_shift);
  Vector seed = layout.pack_cert(SymMatrix::identity(layout.n_g), Vector::Ones(layout.n_phi));
  if (auto scaled = scale_into_polytope(Matrix::Identity(layout.n_g, layout.n_g), poly)) {
    seed.head(layout.q1_vars()).setZero();
    for (int i = 0; i < layout.n_g; ++i)
      for (int j = i; j < layout.n_g; ++j) seed(layout.q1_index(i, j)) = (*scaled)(i, j);
  }
  return solve_logdet_problem(std::move(problem), layout, seed, params, true);
}

CertificationResult max_invariant_ellipse(const LtiPlant& plant, const Matrix& k_gain,
                                          const Polytope& poly, double lmi_shift,
                                          const SolverParams& params) {
  const int n_g = plant.state_dim();
  require(k_gain.rows() == plant.input_dim() && k_gain.cols() == n_g,
          "max_invariant_ellipse: gain dimension mismatch");
  SynthesisLayout layout{n_g, plant.input_dim(), 0};
  const Matrix a_cl = plant.a_g - plant.b_g * k_gain;

  BarrierProblem p;
  p.num_vars = layout.q1_vars();
  AffineMatrixMap big = AffineMatrixMap::zero(2 * n_g);
  for (int i = 0; i < n_g; ++i)
    for (int j = i; j < n_g; ++j) {
      const int var = layout.q1_index(i, j);
      big.add_sym(var, i, j, 1.0);
      big.add_sym(var, n_g + i, n_g + j, 1.0);
      for (int r = 0; r < n_g; ++r) {
        if (i == j) {
          big.add_sym(var, n_g + r, i, a_cl(r, i));
        } else {
          big.add_sym(var, n_g + r, j, a_cl(r, i));
          big.add_sym(var, n_g + r, i, a_cl(r, j));
        }
      }
    }
  big.s0.diagonal().array() -= lmi_shift;
  big.finalize();
  p.blocks.push_back(std::move(big));
  p.blocks.push_back(q1_positivity_block(layout));
  p.logdet_terms.push_back({1, 1.0});
  append_safety_rows(p.blocks, poly, layout);

  Vector seed = Vector::Zero(p.num_vars);
  Matrix q1_seed = Matrix::Identity(n_g, n_g);
  if (auto gram = lyapunov_gramian(a_cl)) q1_seed = *gram;
  if (auto scaled = scale_into_polytope(q1_seed, poly)) q1_seed = *scaled;
  for (int i = 0; i < n_g; ++i)
    for (int j = i; j < n_g; ++j) seed(layout.q1_index(i, j)) = q1_seed(i, j);
  return solve_logdet_problem(std::move(p), layout, seed, params, false);
}

}  // namespace safeil

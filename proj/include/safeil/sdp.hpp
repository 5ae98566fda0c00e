#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "safeil/common.hpp"
#include "safeil/lmi.hpp"

namespace safeil {

/// One coordinate coefficient of a symmetric affine matrix map.
struct MatrixEntry {
  int row;
  int col;
  double coeff;
};

/// S(x) = s0 + sum_i x_i A_i with sparse symmetric A_i, required S(x) > 0.
struct AffineMatrixMap {
  int dim = 0;
  Matrix s0;
  std::vector<std::pair<int, std::vector<MatrixEntry>>> coeffs;  // grouped by variable

  static AffineMatrixMap zero(int dim);
  void add(int var, int row, int col, double coeff);
  /// Add coeff at (row,col) and (col,row); diagonal entries added once.
  void add_sym(int var, int row, int col, double coeff);
  void finalize();  // merge duplicate (var,row,col) triples
  Matrix eval(const Vector& x) const;
};

/// Objective term -weight * logdet(S_block(x)) referencing a constraint block.
struct LogDetTerm {
  int block;
  double weight;
};

/// minimize lin^T x + 1/2 x^T quad x - sum_t w_t logdet(S_{b_t}(x))
/// subject to S_b(x) > 0 for every block b.
struct BarrierProblem {
  int num_vars = 0;
  std::vector<AffineMatrixMap> blocks;
  std::vector<LogDetTerm> logdet_terms;
  Vector lin;   // empty means zero
  Matrix quad;  // empty means zero; must be PSD
  // centering regularizer mu/2 sum_i w_i (x_i - c_i)^2, scaled by the barrier
  // parameter so it vanishes from the optimality system as mu -> 0; used to
  // pin variables the objective leaves unpriced (sector multipliers of dead
  // channels)
  Vector mu_reg_weight;  // empty means zero
  Vector mu_reg_center;
};

struct SolverParams {
  double mu_init = 1.0;
  double mu_factor = 0.1;
  double mu_final = 1e-8;
  int max_newton_per_stage = 80;
  int max_newton_total = 4000;
  double armijo = 1e-4;
  double min_step = 1e-14;
  double center_tol = 1e-10;   // on the Newton decrement, relative
  double feas_margin = 1e-9;   // required strict margin for feasible points
  int verbosity = 0;           // > 0 prints one line per Newton step
};

struct SolverReport {
  bool converged = false;
  int iterations = 0;  // total Newton steps
  double final_mu = 0.0;
  double final_grad_norm = 0.0;
  double objective = 0.0;
  std::vector<double> block_margins;  // min eig per constraint block at exit
  std::string message;
};

/// Check S_b(x) - margin*I > 0 for every block.
bool strictly_feasible(const BarrierProblem& p, const Vector& x, double margin);

/// Damped-Newton path following on the log-det barrier from a strictly
/// feasible start. Every trial point is re-checked by Cholesky on all
/// constraint blocks.
std::pair<Vector, SolverReport> barrier_newton(const BarrierProblem& p, const Vector& x0,
                                               const SolverParams& params = {});

/// Minimize the feasibility slack from an arbitrary start. Returns a point
/// with all margins >= feas_margin, or nullopt (infeasible: optimal slack
/// could not be driven below zero).
std::optional<Vector> phase_one(const BarrierProblem& p, const Vector& x0,
                                const SolverParams& params = {}, SolverReport* report = nullptr);

/// Plain-text sparse dump of a subproblem for cross-checking against
/// external solvers (debugging aid).
void dump_sdpa(const BarrierProblem& p, const std::string& path);

// ---------------------------------------------------------------------------
// Synthesis subproblems
// ---------------------------------------------------------------------------

/// Packing order of the (Q, L) decision variables into a flat vector:
/// upper triangle of Q1 (row-major), q2, then L1..L4 row-major.
struct SynthesisLayout {
  int n_g = 0, n_u = 0, n_phi = 0;

  int q1_vars() const { return n_g * (n_g + 1) / 2; }
  int q1_index(int i, int j) const;  // i <= j
  int q2_off() const { return q1_vars(); }
  int l1_off() const { return q2_off() + n_phi; }
  int l2_off() const { return l1_off() + n_u * n_g; }
  int l3_off() const { return l2_off() + n_u * n_phi; }
  int l4_off() const { return l3_off() + n_phi * n_g; }
  int total_ql() const { return l4_off() + n_phi * n_phi; }
  int total_cert() const { return q1_vars() + n_phi; }

  Vector pack(const SynthesisVars& v) const;
  SynthesisVars unpack(const Vector& x) const;
  Vector pack_cert(const SymMatrix& q1, const Vector& q2) const;
  std::pair<SymMatrix, Vector> unpack_cert(const Vector& x) const;
};

/// Eq.-style synthesis LMI as an affine map over the full (Q, L) layout.
AffineMatrixMap build_synthesis_lmi(const LtiPlant& plant, const SynthesisLayout& layout);

/// The same LMI with L := Ntilde blkdiag(Q1, Q2) substituted, affine over
/// the (Q1, q2) certification layout.
AffineMatrixMap build_certification_lmi(const LtiPlant& plant, const TransformedNn& tilde,
                                        const SynthesisLayout& layout);

/// Complete barrier problem for the ADMM (Q,L)-update.
BarrierProblem build_ql_problem(const LtiPlant& plant, const Polytope& poly, const Matrix& f_mat,
                                const Matrix& y, double rho, double eta2,
                                const SynthesisLayout& layout);

/// Complete barrier problem for certification / volume maximization.
BarrierProblem build_certification_problem(const LtiPlant& plant, const Polytope& poly,
                                           const TransformedNn& tilde,
                                           const SynthesisLayout& layout, double lmi_shift);

std::pair<SynthesisVars, SolverReport> solve_ql_update(
    const LtiPlant& plant, const Polytope& poly, const WeightMatrixN& n_fixed,
    const SectorBounds& sectors, const Matrix& y, double rho, double eta2,
    const std::optional<SynthesisVars>& warm_start = std::nullopt,
    const SolverParams& params = {});

struct CertificationResult {
  bool feasible = false;
  std::optional<SymMatrix> q1;
  Vector q2;
  SolverReport report;
};

/// Maximize logdet Q1 subject to the substituted synthesis LMI, the safety
/// rows and positivity. Infeasibility is a verdict, not an error.
CertificationResult solve_certification(const LtiPlant& plant, const Polytope& poly,
                                        const TransformedNn& t_fixed, double lmi_shift = 1e-6,
                                        const SolverParams& params = {});

/// Largest certified invariant ellipsoid E(Q1^{-1}) in the polytope for a
/// linear state feedback u = -K x (used to compare against the expert).
CertificationResult max_invariant_ellipse(const LtiPlant& plant, const Matrix& k_gain,
                                          const Polytope& poly, double lmi_shift = 1e-6,
                                          const SolverParams& params = {});

}  // namespace safeil

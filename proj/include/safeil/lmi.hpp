#pragma once

#include "safeil/bounds.hpp"
#include "safeil/looptrans.hpp"
#include "safeil/nn.hpp"
#include "safeil/numerics.hpp"
#include "safeil/plant.hpp"

namespace safeil {

/// Lyapunov certificate for the analysis LMIs: V(x) = x^T P x plus the
/// nonnegative sector multipliers lambda.
struct AnalysisCertificate {
  SymMatrix p;
  Vector lambda;

  AnalysisCertificate(SymMatrix p_in, Vector lambda_in)
      : p(std::move(p_in)), lambda(std::move(lambda_in)) {
    require((lambda.array() >= 0.0).all(), "AnalysisCertificate: lambda must be nonnegative");
  }
};

/// Convex synthesis variables: Q1 = P^{-1}, Q2 = Lambda^{-1} (diagonal,
/// stored as a positive vector), and the free blocks L1..L4.
struct SynthesisVars {
  SymMatrix q1;
  Vector q2;
  Matrix l1, l2, l3, l4;
};

/// Numerical margin used by all feasibility verdicts.
constexpr double kFeasibilityMargin = 1e-8;
constexpr double kEigTolerance = 1e-9;

/// Analysis LMI on the original representation (negative definite iff the
/// Lyapunov + sector condition holds). Dimension n_G + n_phi.
SymMatrix assemble_theorem1(const LtiPlant& plant, const WeightMatrixN& n, const SectorBounds& s,
                            const AnalysisCertificate& cert);

/// Analysis LMI on the loop-transformed representation (normalized sector).
SymMatrix assemble_transformed(const LtiPlant& plant, const TransformedNn& t,
                               const AnalysisCertificate& cert);

/// Intermediate Schur-complement form, positive definite iff the transformed
/// analysis LMI is negative definite. Dimension 2(n_G + n_phi). Nonconvex in
/// (P, Lambda) but linear in Ntilde.
SymMatrix assemble_intermediate(const LtiPlant& plant, const TransformedNn& t,
                                const AnalysisCertificate& cert);

/// Convex synthesis LMI in (Q1, Q2, L1..L4). Dimension 2(n_G + n_phi).
SymMatrix assemble_synthesis(const LtiPlant& plant, const SynthesisVars& v);

/// Safety slacks h_i^2 - H_i^T Q1 H_i; all nonnegative iff E(Q1^{-1}) is
/// inside the polytope.
Vector safety_rows(const SymMatrix& q1, const Polytope& poly);

}  // namespace safeil

#pragma once

#include <utility>
#include <vector>

#include "safeil/bounds.hpp"
#include "safeil/nn.hpp"

namespace safeil {

struct SynthesisVars;  // defined in lmi.hpp

/// Loop-transformed network blocks: [u; v_phi] = Ntilde [x; z_phi] with
/// z_phi = phitilde(v_phi) normalized to the sector [-1, 1].
struct TransformedNn {
  Matrix n_ux;  // n_u x n_G
  Matrix n_uz;  // n_u x n_phi
  Matrix n_vx;  // n_phi x n_G
  Matrix n_vz;  // n_phi x n_phi
};

/// Ntilde = f(N) for the given sectors.
TransformedNn loop_transform(const WeightMatrixN& n, const SectorBounds& s);

/// Intermediates cached for the analytic gradient of f.
struct LoopTransformWork {
  TransformedNn t;
  Matrix e;   // (I - C4)^{-1}, computed by the finite Neumann series
  Matrix c2;  // N_uw (A+B)/2
  Matrix c3;  // N_vw (B-A)/2
};

LoopTransformWork loop_transform_with_work(const WeightMatrixN& n, const SectorBounds& s,
                                           const std::vector<int>& layer_sizes);

/// Adjoint of f at N: maps an upstream gradient (partitioned like Ntilde)
/// to gradients with respect to the N blocks, sectors held constant.
WeightMatrixN loop_transform_adjoint(const WeightMatrixN& n, const SectorBounds& s,
                                     const LoopTransformWork& work, const TransformedNn& gbar);

/// (I - c4)^{-1} = I + c4 + ... + c4^{layers-1}; exact because c4 is
/// strictly block lower triangular in the layer partition.
Matrix neumann_inverse(const Matrix& c4, const std::vector<int>& layer_sizes);

/// Evaluate the transformed representation by layer-ordered substitution.
std::pair<Vector, ActivationTrace> forward_transformed(const TransformedNn& t, Activation act,
                                                       double leak, const SectorBounds& s,
                                                       const std::vector<int>& layer_sizes,
                                                       const Vector& x);

/// Ntilde = L Q^{-1} from SDP variables (Q1 PD, Q2 positive diagonal).
TransformedNn recover_tilde(const SynthesisVars& q);

/// f(N) Q - L and its Frobenius norm (the ADMM coupling residual).
std::pair<Matrix, double> penalty_residual(const WeightMatrixN& n, const SectorBounds& s,
                                           const SynthesisVars& q);

/// ||f(N) - L Q^{-1}||_F, the form reported in the case studies.
double paper_residual(const WeightMatrixN& n, const SectorBounds& s, const SynthesisVars& q);

/// Stack the four blocks into one (n_u+n_phi) x (n_G+n_phi) matrix.
Matrix tilde_as_matrix(const TransformedNn& t);
TransformedNn tilde_from_matrix(const Matrix& m, int n_u, int n_g, int n_phi);

}  // namespace safeil

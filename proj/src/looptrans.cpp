#include "safeil/looptrans.hpp"

#include <cmath>

#include "safeil/lmi.hpp"
#include "safeil/numerics.hpp"

namespace safeil {

namespace {

void check_sectors(const SectorBounds& s, int n_phi) {
  require(s.alpha.size() == n_phi && s.beta.size() == n_phi,
          "loop_transform: sector dimension mismatch");
  require((s.alpha.array() <= s.beta.array()).all(), "loop_transform: requires alpha <= beta");
}

}  // namespace

Matrix neumann_inverse(const Matrix& c4, const std::vector<int>& layer_sizes) {
  const int n_phi = static_cast<int>(c4.rows());
  require(c4.cols() == n_phi, "neumann_inverse: matrix must be square");
  require(!layer_sizes.empty(), "neumann_inverse: empty layer partition");
  int total = 0;
  for (int s : layer_sizes) total += s;
  require(total == n_phi, "neumann_inverse: layer sizes do not sum to matrix dim");

  // structural precondition: strictly block lower triangular in the layer
  // partition (blocks on and above the diagonal are zero)
  int row_off = 0;
  for (size_t i = 0; i < layer_sizes.size(); ++i) {
    int col_off = 0;
    for (size_t j = 0; j < layer_sizes.size(); ++j) {
      if (j >= i && layer_sizes[i] > 0 && layer_sizes[j] > 0) {
        const Matrix block = c4.block(row_off, col_off, layer_sizes[i], layer_sizes[j]);
        require(block.cwiseAbs().maxCoeff() == 0.0,
                "neumann_inverse: matrix is not strictly block lower triangular");
      }
      col_off += layer_sizes[j];
    }
    row_off += layer_sizes[i];
  }

  Matrix acc = Matrix::Identity(n_phi, n_phi);
  Matrix power = Matrix::Identity(n_phi, n_phi);
  for (size_t k = 1; k < layer_sizes.size(); ++k) {
    power = power * c4;
    acc += power;
  }
  return acc;
}

LoopTransformWork loop_transform_with_work(const WeightMatrixN& n, const SectorBounds& s,
                                           const std::vector<int>& layer_sizes) {
  const int n_phi = static_cast<int>(n.n_vw.rows());
  check_sectors(s, n_phi);
  const Vector d1 = 0.5 * (s.beta - s.alpha);
  const Vector d2 = 0.5 * (s.alpha + s.beta);

  LoopTransformWork work;
  const Matrix c1 = n.n_uw * d1.asDiagonal();
  work.c2 = n.n_uw * d2.asDiagonal();
  work.c3 = n.n_vw * d1.asDiagonal();
  const Matrix c4 = n.n_vw * d2.asDiagonal();
  work.e = neumann_inverse(c4, layer_sizes);

  work.t.n_vx = work.e * n.n_vx;
  work.t.n_vz = work.e * work.c3;
  work.t.n_ux = n.n_ux + work.c2 * work.t.n_vx;
  work.t.n_uz = c1 + work.c2 * work.t.n_vz;
  return work;
}

TransformedNn loop_transform(const WeightMatrixN& n, const SectorBounds& s) {
  return loop_transform_with_work(n, s, n.layer_sizes).t;
}

WeightMatrixN loop_transform_adjoint(const WeightMatrixN& n, const SectorBounds& s,
                                     const LoopTransformWork& work, const TransformedNn& gbar) {
  const Vector d1 = 0.5 * (s.beta - s.alpha);
  const Vector d2 = 0.5 * (s.alpha + s.beta);

  // forward pass:  M = E N_vx, T = E C3, Nt_ux = N_ux + C2 M, Nt_uz = C1 + C2 T
  const Matrix& m = work.t.n_vx;
  const Matrix& t = work.t.n_vz;

  const Matrix d_c1 = gbar.n_uz;
  const Matrix d_c2 = gbar.n_ux * m.transpose() + gbar.n_uz * t.transpose();
  const Matrix d_m = work.c2.transpose() * gbar.n_ux + gbar.n_vx;
  const Matrix d_t = work.c2.transpose() * gbar.n_uz + gbar.n_vz;
  const Matrix d_nvx = work.e.transpose() * d_m;
  const Matrix d_c3 = work.e.transpose() * d_t;
  const Matrix d_e = d_m * n.n_vx.transpose() + d_t * work.c3.transpose();
  const Matrix d_c4 = work.e.transpose() * d_e * work.e.transpose();

  WeightMatrixN g;
  g.layer_sizes = n.layer_sizes;
  g.n_ux = gbar.n_ux;
  g.n_uw = d_c1 * d1.asDiagonal() + d_c2 * d2.asDiagonal();
  g.n_vx = d_nvx;
  g.n_vw = d_c3 * d1.asDiagonal() + d_c4 * d2.asDiagonal();
  return g;
}

std::pair<Vector, ActivationTrace> forward_transformed(const TransformedNn& t, Activation act,
                                                       double leak, const SectorBounds& s,
                                                       const std::vector<int>& layer_sizes,
                                                       const Vector& x) {
  const int n_phi = static_cast<int>(t.n_vx.rows());
  require(x.size() == t.n_vx.cols(), "forward_transformed: input dimension mismatch");
  check_sectors(s, n_phi);

  ActivationTrace trace;
  trace.v_phi.resize(n_phi);
  trace.w_phi.resize(n_phi);
  Vector z = Vector::Zero(n_phi);

  const Vector base = t.n_vx * x;
  int offset = 0;
  for (int size : layer_sizes) {
    for (int i = offset; i < offset + size; ++i) {
      double v = base(i);
      for (int j = 0; j < offset; ++j) v += t.n_vz(i, j) * z(j);  // earlier layers only
      trace.v_phi(i) = v;
      const double w = activate(act, leak, v);
      trace.w_phi(i) = w;
      const double width = s.beta(i) - s.alpha(i);
      z(i) = width == 0.0 ? 0.0 : (2.0 * w - (s.alpha(i) + s.beta(i)) * v) / width;
    }
    offset += size;
  }
  require(offset == n_phi, "forward_transformed: layer sizes do not sum to n_phi");
  trace.z_phi = z;
  Vector u = t.n_ux * x + t.n_uz * z;
  return {std::move(u), std::move(trace)};
}

TransformedNn recover_tilde(const SynthesisVars& q) {
  require((q.q2.array() > 0.0).all(), "recover_tilde: Q2 must be positive");
  // Nt_ux = L1 Q1^{-1}  solved as Q1 X^T = L1^T (Q1 symmetric PD)
  const Matrix xt1 = solve_pd(q.q1, q.l1.transpose());
  const Matrix xt3 = solve_pd(q.q1, q.l3.transpose());
  TransformedNn t;
  t.n_ux = xt1.transpose();
  t.n_vx = xt3.transpose();
  t.n_uz = q.l2 * q.q2.cwiseInverse().asDiagonal();
  t.n_vz = q.l4 * q.q2.cwiseInverse().asDiagonal();
  return t;
}

Matrix tilde_as_matrix(const TransformedNn& t) {
  const int n_u = static_cast<int>(t.n_ux.rows());
  const int n_g = static_cast<int>(t.n_ux.cols());
  const int n_phi = static_cast<int>(t.n_vz.rows());
  Matrix m(n_u + n_phi, n_g + n_phi);
  m.topLeftCorner(n_u, n_g) = t.n_ux;
  m.topRightCorner(n_u, n_phi) = t.n_uz;
  m.bottomLeftCorner(n_phi, n_g) = t.n_vx;
  m.bottomRightCorner(n_phi, n_phi) = t.n_vz;
  return m;
}

TransformedNn tilde_from_matrix(const Matrix& m, int n_u, int n_g, int n_phi) {
  require(m.rows() == n_u + n_phi && m.cols() == n_g + n_phi,
          "tilde_from_matrix: dimension mismatch");
  TransformedNn t;
  t.n_ux = m.topLeftCorner(n_u, n_g);
  t.n_uz = m.topRightCorner(n_u, n_phi);
  t.n_vx = m.bottomLeftCorner(n_phi, n_g);
  t.n_vz = m.bottomRightCorner(n_phi, n_phi);
  return t;
}

std::pair<Matrix, double> penalty_residual(const WeightMatrixN& n, const SectorBounds& s,
                                           const SynthesisVars& q) {
  const Matrix f = tilde_as_matrix(loop_transform(n, s));
  const int n_g = q.q1.dim();
  const int n_phi = static_cast<int>(q.q2.size());
  Matrix fq(f.rows(), f.cols());
  fq.leftCols(n_g) = f.leftCols(n_g) * q.q1.mat();
  fq.rightCols(n_phi) = f.rightCols(n_phi) * q.q2.asDiagonal();
  Matrix l(f.rows(), f.cols());
  l.topLeftCorner(q.l1.rows(), q.l1.cols()) = q.l1;
  l.topRightCorner(q.l2.rows(), q.l2.cols()) = q.l2;
  l.bottomLeftCorner(q.l3.rows(), q.l3.cols()) = q.l3;
  l.bottomRightCorner(q.l4.rows(), q.l4.cols()) = q.l4;
  Matrix residual = fq - l;
  const double norm = residual.norm();
  return {std::move(residual), norm};
}

double paper_residual(const WeightMatrixN& n, const SectorBounds& s, const SynthesisVars& q) {
  const Matrix f = tilde_as_matrix(loop_transform(n, s));
  const Matrix lq = tilde_as_matrix(recover_tilde(q));
  return (f - lq).norm();
}

}  // namespace safeil

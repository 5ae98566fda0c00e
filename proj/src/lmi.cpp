#include "safeil/lmi.hpp"

namespace safeil {

namespace {

// [[A^T P A - P, A^T P B], [B^T P A, B^T P B]]
Matrix lyapunov_middle(const LtiPlant& plant, const SymMatrix& p) {
  const int n_g = plant.state_dim();
  const int n_u = plant.input_dim();
  const Matrix& a = plant.a_g;
  const Matrix& b = plant.b_g;
  Matrix mid(n_g + n_u, n_g + n_u);
  mid.topLeftCorner(n_g, n_g) = a.transpose() * p.mat() * a - p.mat();
  mid.topRightCorner(n_g, n_u) = a.transpose() * p.mat() * b;
  mid.bottomLeftCorner(n_u, n_g) = b.transpose() * p.mat() * a;
  mid.bottomRightCorner(n_u, n_u) = b.transpose() * p.mat() * b;
  return mid;
}

}  // namespace

SymMatrix assemble_theorem1(const LtiPlant& plant, const WeightMatrixN& n, const SectorBounds& s,
                            const AnalysisCertificate& cert) {
  const int n_g = plant.state_dim();
  const int n_u = plant.input_dim();
  const int n_phi = static_cast<int>(n.n_vw.rows());
  require(cert.p.dim() == n_g && cert.lambda.size() == n_phi,
          "assemble_theorem1: certificate dimension mismatch");

  Matrix r_v(n_g + n_u, n_g + n_phi);
  r_v.topLeftCorner(n_g, n_g).setIdentity();
  r_v.topRightCorner(n_g, n_phi).setZero();
  r_v.bottomLeftCorner(n_u, n_g) = n.n_ux;
  r_v.bottomRightCorner(n_u, n_phi) = n.n_uw;

  Matrix r_phi(2 * n_phi, n_g + n_phi);
  r_phi.topLeftCorner(n_phi, n_g) = n.n_vx;
  r_phi.topRightCorner(n_phi, n_phi) = n.n_vw;
  r_phi.bottomLeftCorner(n_phi, n_g).setZero();
  r_phi.bottomRightCorner(n_phi, n_phi).setIdentity();

  // sector quadratic-constraint middle matrix (diagonal blocks)
  const Vector al = s.alpha.cwiseProduct(cert.lambda);
  Matrix mid_phi = Matrix::Zero(2 * n_phi, 2 * n_phi);
  for (int i = 0; i < n_phi; ++i) {
    mid_phi(i, i) = -2.0 * s.alpha(i) * s.beta(i) * cert.lambda(i);
    mid_phi(i, n_phi + i) = (s.alpha(i) + s.beta(i)) * cert.lambda(i);
    mid_phi(n_phi + i, i) = mid_phi(i, n_phi + i);
    mid_phi(n_phi + i, n_phi + i) = -2.0 * cert.lambda(i);
  }

  const Matrix lhs = r_v.transpose() * lyapunov_middle(plant, cert.p) * r_v +
                     r_phi.transpose() * mid_phi * r_phi;
  return symmetrize(lhs);
}

SymMatrix assemble_transformed(const LtiPlant& plant, const TransformedNn& t,
                               const AnalysisCertificate& cert) {
  const int n_g = plant.state_dim();
  const int n_u = plant.input_dim();
  const int n_phi = static_cast<int>(t.n_vz.rows());
  require(cert.p.dim() == n_g && cert.lambda.size() == n_phi,
          "assemble_transformed: certificate dimension mismatch");

  Matrix r_v(n_g + n_u, n_g + n_phi);
  r_v.topLeftCorner(n_g, n_g).setIdentity();
  r_v.topRightCorner(n_g, n_phi).setZero();
  r_v.bottomLeftCorner(n_u, n_g) = t.n_ux;
  r_v.bottomRightCorner(n_u, n_phi) = t.n_uz;

  Matrix r_phi(2 * n_phi, n_g + n_phi);
  r_phi.topLeftCorner(n_phi, n_g) = t.n_vx;
  r_phi.topRightCorner(n_phi, n_phi) = t.n_vz;
  r_phi.bottomLeftCorner(n_phi, n_g).setZero();
  r_phi.bottomRightCorner(n_phi, n_phi).setIdentity();

  Matrix mid_phi = Matrix::Zero(2 * n_phi, 2 * n_phi);
  mid_phi.topLeftCorner(n_phi, n_phi) = Matrix(cert.lambda.asDiagonal());
  mid_phi.bottomRightCorner(n_phi, n_phi) = -Matrix(cert.lambda.asDiagonal());

  const Matrix lhs = r_v.transpose() * lyapunov_middle(plant, cert.p) * r_v +
                     r_phi.transpose() * mid_phi * r_phi;
  return symmetrize(lhs);
}

SymMatrix assemble_intermediate(const LtiPlant& plant, const TransformedNn& t,
                                const AnalysisCertificate& cert) {
  const int n_g = plant.state_dim();
  const int n_phi = static_cast<int>(t.n_vz.rows());
  require(cert.p.dim() == n_g && cert.lambda.size() == n_phi,
          "assemble_intermediate: certificate dimension mismatch");
  require((cert.lambda.array() > 0.0).all(),
          "assemble_intermediate: lambda must be strictly positive (Lambda^{-1} appears)");

  const int n = n_g + n_phi;
  const Matrix a_cl = plant.a_g + plant.b_g * t.n_ux;  // A + B Nt_ux
  const Matrix b_cl = plant.b_g * t.n_uz;

  Matrix m(2 * n, 2 * n);
  m.setZero();
  m.topLeftCorner(n_g, n_g) = cert.p.mat();
  m.block(n_g, n_g, n_phi, n_phi) = Matrix(cert.lambda.asDiagonal());
  m.block(0, n, n_g, n_g) = a_cl.transpose();
  m.block(0, n + n_g, n_g, n_phi) = t.n_vx.transpose();
  m.block(n_g, n, n_phi, n_g) = b_cl.transpose();
  m.block(n_g, n + n_g, n_phi, n_phi) = t.n_vz.transpose();
  m.block(n, 0, n_g, n_g) = a_cl;
  m.block(n, n_g, n_g, n_phi) = b_cl;
  m.block(n + n_g, 0, n_phi, n_g) = t.n_vx;
  m.block(n + n_g, n_g, n_phi, n_phi) = t.n_vz;
  m.block(n, n, n_g, n_g) = solve_pd(cert.p, Matrix::Identity(n_g, n_g));
  m.block(n + n_g, n + n_g, n_phi, n_phi) =
      Matrix(cert.lambda.cwiseInverse().asDiagonal());
  return symmetrize(m);
}

SymMatrix assemble_synthesis(const LtiPlant& plant, const SynthesisVars& v) {
  const int n_g = plant.state_dim();
  const int n_u = plant.input_dim();
  const int n_phi = static_cast<int>(v.q2.size());
  require(v.q1.dim() == n_g, "assemble_synthesis: Q1 dimension mismatch");
  require(v.l1.rows() == n_u && v.l1.cols() == n_g, "assemble_synthesis: L1 shape mismatch");
  require(v.l2.rows() == n_u && v.l2.cols() == n_phi, "assemble_synthesis: L2 shape mismatch");
  require(v.l3.rows() == n_phi && v.l3.cols() == n_g, "assemble_synthesis: L3 shape mismatch");
  require(v.l4.rows() == n_phi && v.l4.cols() == n_phi, "assemble_synthesis: L4 shape mismatch");

  const int n = n_g + n_phi;
  const Matrix aq_bl = plant.a_g * v.q1.mat() + plant.b_g * v.l1;  // A Q1 + B L1
  const Matrix bl2 = plant.b_g * v.l2;

  Matrix m(2 * n, 2 * n);
  m.setZero();
  m.topLeftCorner(n_g, n_g) = v.q1.mat();
  m.block(n_g, n_g, n_phi, n_phi) = Matrix(v.q2.asDiagonal());
  m.block(0, n, n_g, n_g) = aq_bl.transpose();
  m.block(0, n + n_g, n_g, n_phi) = v.l3.transpose();
  m.block(n_g, n, n_phi, n_g) = bl2.transpose();
  m.block(n_g, n + n_g, n_phi, n_phi) = v.l4.transpose();
  m.block(n, 0, n_g, n_g) = aq_bl;
  m.block(n, n_g, n_g, n_phi) = bl2;
  m.block(n + n_g, 0, n_phi, n_g) = v.l3;
  m.block(n + n_g, n_g, n_phi, n_phi) = v.l4;
  m.block(n, n, n_g, n_g) = v.q1.mat();
  m.block(n + n_g, n + n_g, n_phi, n_phi) = Matrix(v.q2.asDiagonal());
  return symmetrize(m);
}

Vector safety_rows(const SymMatrix& q1, const Polytope& poly) {
  return ellipsoid_in_polytope(q1, poly).margins;
}

}  // namespace safeil

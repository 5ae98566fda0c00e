#include "safeil/numerics.hpp"

#include <cmath>

namespace safeil {

SymMatrix::SymMatrix(Matrix m) {
  require(m.rows() == m.cols() && m.rows() >= 1, "SymMatrix: matrix must be square, dim >= 1");
  require(m.allFinite(), "SymMatrix: non-finite entries");
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * scale,
          "SymMatrix: input is not symmetric");
  m_ = 0.5 * (m + m.transpose().eval());
}

SymMatrix SymMatrix::identity(int dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

SymMatrix SymMatrix::diag(const Vector& d) {
  return SymMatrix(Matrix(d.asDiagonal()));
}

SymMatrix symmetrize(const Matrix& m) {
  require(m.rows() == m.cols(), "symmetrize: matrix must be square");
  return SymMatrix(0.5 * (m + m.transpose().eval()));
}

std::optional<Matrix> cholesky(const SymMatrix& sym) {
  const Matrix& m = sym.mat();
  const int n = sym.dim();
  Matrix l = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double d = m(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return std::nullopt;  // pivot <= 0 or NaN: not positive definite
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

double logdet_pd(const SymMatrix& m) {
  auto l = cholesky(m);
  require(l.has_value(), "logdet_pd: matrix is not positive definite");
  double acc = 0.0;
  for (int i = 0; i < m.dim(); ++i) acc += std::log((*l)(i, i));
  return 2.0 * acc;
}

double min_eig_sym(const SymMatrix& sym, double tol) {
  const Matrix& m = sym.mat();
  const int n = sym.dim();
  // Gershgorin bounds
  double lo = m(0, 0), hi = m(0, 0);
  for (int i = 0; i < n; ++i) {
    double radius = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i) radius += std::abs(m(i, j));
    lo = std::min(lo, m(i, i) - radius);
    hi = std::max(hi, m(i, i) + radius);
  }
  // m - shift*I positive definite  <=>  min eig > shift
  auto pd_shifted = [&](double shift) {
    Matrix s = m;
    s.diagonal().array() -= shift;
    return cholesky(SymMatrix(s)).has_value();
  };
  if (pd_shifted(hi)) return hi;  // cannot happen for exact arithmetic; guards roundoff
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (pd_shifted(mid))
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

Matrix solve_pd(const SymMatrix& m, const Matrix& rhs) {
  require(m.dim() == rhs.rows(), "solve_pd: dimension mismatch");
  auto lopt = cholesky(m);
  require(lopt.has_value(), "solve_pd: matrix is not positive definite");
  const Matrix& l = *lopt;
  const int n = m.dim();
  Matrix x = rhs;
  // forward substitution L y = rhs
  for (int c = 0; c < x.cols(); ++c) {
    for (int i = 0; i < n; ++i) {
      double s = x(i, c);
      for (int k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    // back substitution L^T x = y
    for (int i = n - 1; i >= 0; --i) {
      double s = x(i, c);
      for (int k = i + 1; k < n; ++k) s -= l(k, i) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

}  // namespace safeil

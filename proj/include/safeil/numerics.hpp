#pragma once

#include <optional>

#include "safeil/common.hpp"

namespace safeil {

/// Dense symmetric matrix. Stored full; symmetry is made exact on
/// construction so that factorizations are deterministic.
class SymMatrix {
 public:
  explicit SymMatrix(Matrix m);
  static SymMatrix identity(int dim);
  static SymMatrix diag(const Vector& d);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& mat() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Matrix m_;
};

/// Exact symmetrization (m + m^T)/2, wrapped as SymMatrix.
SymMatrix symmetrize(const Matrix& m);

/// Unblocked Cholesky, lower factor. Returns nullopt when a pivot <= 0 is
/// encountered; this is the single definiteness test used by all modules.
std::optional<Matrix> cholesky(const SymMatrix& m);

inline bool is_pos_def(const SymMatrix& m) { return cholesky(m).has_value(); }

/// log det of a positive definite matrix, via the Cholesky diagonal.
double logdet_pd(const SymMatrix& m);

/// Smallest eigenvalue by bisection on shifted Cholesky success/failure.
double min_eig_sym(const SymMatrix& m, double tol = 1e-9);

/// Solve m x = rhs for positive definite m.
Matrix solve_pd(const SymMatrix& m, const Matrix& rhs);

}  // namespace safeil

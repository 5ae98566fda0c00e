#include "safeil/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace safeil {

namespace {
constexpr double kDivergenceThreshold = 1e9;
}

Ellipsoid::Ellipsoid(SymMatrix shape) : p(std::move(shape)) {
  require(is_pos_def(p), "Ellipsoid: shape matrix must be positive definite");
}

Vector step(const LtiPlant& plant, const Vector& x, const Vector& u) {
  require(x.size() == plant.state_dim(), "step: state dimension mismatch");
  require(u.size() == plant.input_dim(), "step: control dimension mismatch");
  return plant.a_g * x + plant.b_g * u;
}

Trajectory simulate(const LtiPlant& plant, const ControlLaw& controller, const Vector& x0,
                    int k_max, double stop_norm) {
  require(x0.size() == plant.state_dim(), "simulate: x0 dimension mismatch");
  Trajectory traj;
  traj.states.reserve(static_cast<size_t>(k_max) + 1);
  Vector x = x0;
  traj.states.push_back(x);
  for (int k = 0; k < k_max; ++k) {
    if (x.norm() <= stop_norm) break;
    Vector u = controller(x);
    require(u.size() == plant.input_dim(), "simulate: controller output dimension mismatch");
    x = step(plant, x, u);
    traj.controls.push_back(std::move(u));
    traj.states.push_back(x);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceThreshold) {
      traj.diverged = true;
      break;
    }
  }
  return traj;
}

namespace {

bool is_axis_aligned(const Matrix& h) {
  for (int i = 0; i < h.rows(); ++i) {
    int nonzero = 0;
    for (int j = 0; j < h.cols(); ++j)
      if (h(i, j) != 0.0) ++nonzero;
    if (nonzero != 1) return false;
  }
  return true;
}

// Enumerate vertices of {-h <= Hx <= h} by intersecting n_G-tuples of active
// facets; exact for bounded polytopes with n_G <= 3.
std::vector<Vector> enumerate_vertices(const Polytope& poly) {
  const int n = poly.state_dim();
  const int m = poly.num_rows();
  // stacked facet system: rows of [H; -H] with offsets [h; h]
  Matrix a(2 * m, n);
  Vector b(2 * m);
  a.topRows(m) = poly.h_mat;
  a.bottomRows(m) = -poly.h_mat;
  b.head(m) = poly.h_vec;
  b.tail(m) = poly.h_vec;

  std::vector<Vector> vertices;
  std::vector<int> idx(n);
  std::function<void(int, int)> recurse = [&](int start, int depth) {
    if (depth == n) {
      Matrix sys(n, n);
      Vector rhs(n);
      for (int i = 0; i < n; ++i) {
        sys.row(i) = a.row(idx[i]);
        rhs(i) = b(idx[i]);
      }
      Eigen::FullPivLU<Matrix> lu(sys);
      if (!lu.isInvertible()) return;
      Vector x = lu.solve(rhs);
      if (((a * x).array() <= b.array() + 1e-9 * (1.0 + b.cwiseAbs().maxCoeff())).all())
        vertices.push_back(x);
      return;
    }
    for (int i = start; i < 2 * m; ++i) {
      idx[depth] = i;
      recurse(i + 1, depth + 1);
    }
  };
  recurse(0, 0);
  return vertices;
}

}  // namespace

std::pair<Vector, Vector> bounding_box(const Polytope& poly) {
  const int n = poly.state_dim();
  Eigen::FullPivLU<Matrix> lu(poly.h_mat);
  require(lu.rank() == n, "bounding_box: polytope is unbounded (H is rank deficient)");

  if (is_axis_aligned(poly.h_mat)) {
    Vector hi = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (int i = 0; i < poly.num_rows(); ++i) {
      for (int j = 0; j < n; ++j) {
        const double c = poly.h_mat(i, j);
        if (c != 0.0) hi(j) = std::min(hi(j), poly.h_vec(i) / std::abs(c));
      }
    }
    require(hi.allFinite(), "bounding_box: polytope is unbounded");
    return {-hi, hi};
  }

  require(n <= 3, "bounding_box: non-axis-aligned polytopes supported only for n_G <= 3");
  auto vertices = enumerate_vertices(poly);
  require(!vertices.empty(), "bounding_box: vertex enumeration found no vertices");
  Vector lo = vertices.front(), hi = vertices.front();
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

ContainmentCheck ellipsoid_in_polytope(const SymMatrix& q1, const Polytope& poly) {
  require(q1.dim() == poly.state_dim(), "ellipsoid_in_polytope: dimension mismatch");
  ContainmentCheck out;
  out.margins = Vector(poly.num_rows());
  out.inside = true;
  for (int i = 0; i < poly.num_rows(); ++i) {
    const Vector hi = poly.h_mat.row(i).transpose();
    out.margins(i) = poly.h_vec(i) * poly.h_vec(i) - hi.dot(q1.mat() * hi);
    if (out.margins(i) < 0.0) out.inside = false;
  }
  return out;
}

bool contains(const Polytope& poly, const Vector& x) {
  require(x.size() == poly.state_dim(), "contains: dimension mismatch");
  const Vector y = poly.h_mat * x;
  return ((y.array() <= poly.h_vec.array()) && (y.array() >= -poly.h_vec.array())).all();
}

std::vector<Vector> sample_in_ellipsoid(const Ellipsoid& e, int count, std::uint64_t seed) {
  require(count >= 0, "sample_in_ellipsoid: count must be nonnegative");
  const int n = e.p.dim();
  auto l = cholesky(e.p);  // P = L L^T; x = L^{-T} s maps the unit ball onto E(P)
  Rng rng(seed);
  std::vector<Vector> samples;
  samples.reserve(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) {
    Vector s(n);
    for (int i = 0; i < n; ++i) s(i) = gaussian(rng);
    double norm = s.norm();
    if (norm == 0.0) norm = 1.0;
    const double radius = std::pow(uniform(rng, 0.0, 1.0), 1.0 / n);
    s *= radius / norm;
    // back-substitute L^T x = s
    Vector x = s;
    for (int i = n - 1; i >= 0; --i) {
      double acc = x(i);
      for (int k2 = i + 1; k2 < n; ++k2) acc -= (*l)(k2, i) * x(k2);
      x(i) = acc / (*l)(i, i);
    }
    samples.push_back(std::move(x));
  }
  return samples;
}

}  // namespace safeil

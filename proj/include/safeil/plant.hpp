#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "safeil/common.hpp"
#include "safeil/numerics.hpp"

namespace safeil {

/// Discrete-time LTI plant x(k+1) = A x(k) + B u(k).
struct LtiPlant {
  Matrix a_g;
  Matrix b_g;

  LtiPlant(Matrix a, Matrix b) : a_g(std::move(a)), b_g(std::move(b)) {
    require(a_g.rows() == a_g.cols() && a_g.rows() >= 1, "LtiPlant: A must be square, n >= 1");
    require(b_g.rows() == a_g.rows() && b_g.cols() >= 1, "LtiPlant: B row count must match A");
    require(a_g.allFinite() && b_g.allFinite(), "LtiPlant: non-finite entries");
  }
  int state_dim() const { return static_cast<int>(a_g.rows()); }
  int input_dim() const { return static_cast<int>(b_g.cols()); }
};

/// State constraint set {x : -h <= H x <= h}, symmetric around the origin.
struct Polytope {
  Matrix h_mat;
  Vector h_vec;

  Polytope(Matrix h, Vector v) : h_mat(std::move(h)), h_vec(std::move(v)) {
    require(h_mat.rows() == h_vec.size() && h_mat.rows() >= 1,
            "Polytope: H row count must match h");
    require((h_vec.array() >= 0.0).all(), "Polytope: h must be elementwise nonnegative");
    require(h_mat.allFinite() && h_vec.allFinite(), "Polytope: non-finite entries");
  }
  int num_rows() const { return static_cast<int>(h_mat.rows()); }
  int state_dim() const { return static_cast<int>(h_mat.cols()); }
};

/// Ellipsoid {x : x^T P x <= 1} with positive definite shape matrix P.
struct Ellipsoid {
  SymMatrix p;
  explicit Ellipsoid(SymMatrix shape);
};

struct Trajectory {
  std::vector<Vector> states;    // length K+1
  std::vector<Vector> controls;  // length K
  bool diverged = false;         // ||x||_inf exceeded the divergence threshold
};

using ControlLaw = std::function<Vector(const Vector&)>;

Vector step(const LtiPlant& plant, const Vector& x, const Vector& u);

/// Roll the closed loop; stops early when ||x||_2 <= stop_norm. Divergence
/// (||x||_inf > 1e9) is flagged on the trajectory, not thrown.
Trajectory simulate(const LtiPlant& plant, const ControlLaw& controller, const Vector& x0,
                    int k_max, double stop_norm);

/// Smallest axis-aligned box containing the polytope. Throws on unbounded
/// sets; non-axis-aligned H handled by vertex enumeration for n_G <= 3.
std::pair<Vector, Vector> bounding_box(const Polytope& poly);

struct ContainmentCheck {
  bool inside = false;
  Vector margins;  // h_i^2 - H_i^T Q1 H_i per row
};

/// True iff the ellipsoid E(Q1^{-1}) is contained in the polytope.
ContainmentCheck ellipsoid_in_polytope(const SymMatrix& q1, const Polytope& poly);

bool contains(const Polytope& poly, const Vector& x);

/// Deterministic samples with x^T P x <= 1.
std::vector<Vector> sample_in_ellipsoid(const Ellipsoid& e, int count, std::uint64_t seed);

}  // namespace safeil

#include "safeil/bounds.hpp"

#include <cmath>

namespace safeil {

IntervalBounds propagate_bounds(const NnController& nn, const Vector& x_lo, const Vector& x_hi) {
  nn.validate();
  require(x_lo.size() == nn.input_dim() && x_hi.size() == nn.input_dim(),
          "propagate_bounds: box dimension mismatch");
  require((x_lo.array() <= x_hi.array()).all(), "propagate_bounds: x_lo must be <= x_hi");

  const int n_phi = nn.phi_dim();
  IntervalBounds b;
  b.v_lo.resize(n_phi);
  b.v_hi.resize(n_phi);
  b.w_lo.resize(n_phi);
  b.w_hi.resize(n_phi);

  Vector lo = x_lo, hi = x_hi;
  int offset = 0;
  for (size_t layer = 0; layer + 1 < nn.weights.size(); ++layer) {
    const Matrix& w = nn.weights[layer];
    const Vector c = 0.5 * (hi + lo);
    const Vector r = 0.5 * (hi - lo);
    const int rows = static_cast<int>(w.rows());
    Vector v_lo(rows), v_hi(rows);
    for (int i = 0; i < rows; ++i) {
      const double center = w.row(i).dot(c);
      double spread = 0.0;
      for (int j = 0; j < w.cols(); ++j) spread += std::abs(w(i, j) * r(j));
      v_hi(i) = center + spread;
      v_lo(i) = center - spread;
    }
    // monotone activation maps interval endpoints to output endpoints
    Vector w_lo(rows), w_hi(rows);
    for (int i = 0; i < rows; ++i) {
      w_lo(i) = activate(nn.activation, nn.leak, v_lo(i));
      w_hi(i) = activate(nn.activation, nn.leak, v_hi(i));
    }
    b.v_lo.segment(offset, rows) = v_lo;
    b.v_hi.segment(offset, rows) = v_hi;
    b.w_lo.segment(offset, rows) = w_lo;
    b.w_hi.segment(offset, rows) = w_hi;
    offset += rows;
    lo = w_lo;
    hi = w_hi;
  }
  return b;
}

SectorBounds local_sectors(const IntervalBounds& b, Activation act, double leak) {
  const int n = static_cast<int>(b.v_lo.size());
  SectorBounds s;
  s.alpha.resize(n);
  s.beta = Vector::Ones(n);
  for (int i = 0; i < n; ++i)
    require(b.v_lo(i) <= 0.0 && b.v_hi(i) >= 0.0,
            "local_sectors: interval must contain 0 (neuron " + std::to_string(i) + ")");
  switch (act) {
    case Activation::Tanh:
      for (int i = 0; i < n; ++i) {
        const double m = std::max(std::abs(b.v_lo(i)), b.v_hi(i));
        s.alpha(i) = m > 0.0 ? std::tanh(m) / m : 1.0;  // slope at origin in the limit
      }
      break;
    case Activation::Relu:
      s.alpha.setZero();
      break;
    case Activation::LeakyRelu:
      require(leak > 0.0 && leak < 1.0, "local_sectors: leaky-relu slope must be in (0,1)");
      s.alpha.setConstant(leak);
      break;
  }
  return s;
}

double sector_quad_form(const SectorBounds& s, const Vector& lambda, const Vector& v,
                        const Vector& w) {
  const int n = static_cast<int>(s.alpha.size());
  require(lambda.size() == n && v.size() == n && w.size() == n,
          "sector_quad_form: dimension mismatch");
  require((lambda.array() >= 0.0).all(), "sector_quad_form: lambda must be nonnegative");
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += 2.0 * lambda(i) * (w(i) - s.alpha(i) * v(i)) * (s.beta(i) * v(i) - w(i));
  return acc;
}

}  // namespace safeil

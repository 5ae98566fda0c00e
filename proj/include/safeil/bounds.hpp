#pragma once

#include "safeil/common.hpp"
#include "safeil/nn.hpp"

namespace safeil {

/// Per-neuron pre/post-activation intervals, stacked over layers.
struct IntervalBounds {
  Vector v_lo, v_hi;
  Vector w_lo, w_hi;
};

/// Per-neuron local sector [alpha_i, beta_i].
struct SectorBounds {
  Vector alpha, beta;
};

/// Interval bound propagation of the state box through the network.
IntervalBounds propagate_bounds(const NnController& nn, const Vector& x_lo, const Vector& x_hi);

/// Local sectors from pre-activation intervals. Non-symmetric intervals are
/// symmetrized to m = max(|v_lo|, v_hi) before the tanh slope formula.
SectorBounds local_sectors(const IntervalBounds& b, Activation act, double leak = 0.01);

/// Value of the stacked sector quadratic form: sum_i 2 lambda_i
/// (w_i - alpha_i v_i)(beta_i v_i - w_i). Nonnegative whenever w = phi(v)
/// with v inside the sector-valid interval.
double sector_quad_form(const SectorBounds& s, const Vector& lambda, const Vector& v,
                        const Vector& w);

}  // namespace safeil

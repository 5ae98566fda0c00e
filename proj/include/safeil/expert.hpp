#pragma once

#include <string>

#include "safeil/common.hpp"
#include "safeil/nn.hpp"
#include "safeil/numerics.hpp"
#include "safeil/plant.hpp"

namespace safeil {

/// Linear state feedback with the convention u = -K x.
struct LinearGain {
  Matrix k;
};

/// Expert demonstration pairs (x, u).
struct Dataset {
  DataPairs pairs;
  std::string provenance;

  int state_dim() const { return pairs.empty() ? 0 : static_cast<int>(pairs.front().first.size()); }
  int control_dim() const {
    return pairs.empty() ? 0 : static_cast<int>(pairs.front().second.size());
  }
};

/// Discrete LQR via fixed-point iteration on the Riccati equation.
/// Throws when the iteration does not converge (unstabilizable pair).
LinearGain dlqr(const LtiPlant& plant, const SymMatrix& qc, const SymMatrix& rc);

/// Uniform grid over the bounding box of the polytope, filtered to the
/// polytope, labeled with u = -K x. Deterministic row-major ordering.
Dataset generate_grid_dataset(const LinearGain& gain, const Polytope& poly, int per_axis);

Dataset load_csv(const std::string& path);
void save_csv(const Dataset& dataset, const std::string& path);

}  // namespace safeil

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace safeil {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Error type for contract violations and unrecoverable failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

/// Deterministic RNG used everywhere randomness is needed.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline double gaussian(Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline bool is_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace safeil

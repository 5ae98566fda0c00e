#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "safeil/common.hpp"

namespace safeil {

enum class Activation { Tanh, Relu, LeakyRelu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

double activate(Activation a, double leak, double v);
double activate_deriv(Activation a, double leak, double v);

/// Zero-bias feedforward network u = W^{l+1} phi(W^l phi(... W^1 x)).
struct NnController {
  std::vector<Matrix> weights;  // W^1 .. W^{l+1}
  Activation activation = Activation::Tanh;
  double leak = 0.01;  // slope parameter for leaky ReLU

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  int hidden_layers() const { return static_cast<int>(weights.size()) - 1; }
  int phi_dim() const;
  std::vector<int> layer_sizes() const;  // n_1 .. n_l
  void validate() const;
};

/// Stacked activation inputs/outputs v_phi, w_phi (and optionally the
/// loop-transformed outputs z_phi).
struct ActivationTrace {
  Vector v_phi;
  Vector w_phi;
  std::optional<Vector> z_phi;
};

/// Block matrix N with [u; v_phi] = N [x; w_phi].
struct WeightMatrixN {
  Matrix n_ux;  // n_u x n_G, identically zero for zero-bias nets
  Matrix n_uw;  // n_u x n_phi
  Matrix n_vx;  // n_phi x n_G
  Matrix n_vw;  // n_phi x n_phi, strictly block lower triangular
  std::vector<int> layer_sizes;  // n_1 .. n_l partition of n_phi
};

struct AdamConfig {
  double rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;  // first moments, shaped like weights
  std::vector<Matrix> v;  // second moments
  long step = 0;
  AdamConfig cfg;

  static AdamState init(const NnController& nn, const AdamConfig& cfg);
};

using DataPairs = std::vector<std::pair<Vector, Vector>>;

NnController init_nn(int input_dim, const std::vector<int>& hidden, int output_dim,
                     Activation act, std::uint64_t seed, double leak = 0.01);

Vector forward(const NnController& nn, const Vector& x);
ActivationTrace activations(const NnController& nn, const Vector& x);
WeightMatrixN assemble_n(const NnController& nn);

double mse_loss(const NnController& nn, const DataPairs& data);
std::vector<Matrix> grad_mse(const NnController& nn, const DataPairs& data);

std::pair<AdamState, NnController> adam_step(AdamState state, const NnController& nn,
                                             const std::vector<Matrix>& gradient);

void save_weights_json(const NnController& nn, const std::string& path);
NnController load_weights_json(const std::string& path);

}  // namespace safeil

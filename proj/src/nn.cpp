#include "safeil/nn.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace safeil {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky-relu";
  }
  throw Error("activation_name: unknown tag");
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "leaky-relu") return Activation::LeakyRelu;
  throw Error("unknown activation '" + name + "' (expected tanh, relu, leaky-relu)");
}

double activate(Activation a, double leak, double v) {
  switch (a) {
    case Activation::Tanh: return std::tanh(v);
    case Activation::Relu: return v > 0.0 ? v : 0.0;
    case Activation::LeakyRelu: return v > 0.0 ? v : leak * v;
  }
  throw Error("activate: unknown tag");
}

double activate_deriv(Activation a, double leak, double v) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case Activation::Relu: return v > 0.0 ? 1.0 : 0.0;  // subgradient 0 at the kink
    case Activation::LeakyRelu: return v > 0.0 ? 1.0 : leak;
  }
  throw Error("activate_deriv: unknown tag");
}

int NnController::phi_dim() const {
  int n = 0;
  for (size_t i = 0; i + 1 < weights.size(); ++i) n += static_cast<int>(weights[i].rows());
  return n;
}

std::vector<int> NnController::layer_sizes() const {
  std::vector<int> sizes;
  for (size_t i = 0; i + 1 < weights.size(); ++i)
    sizes.push_back(static_cast<int>(weights[i].rows()));
  return sizes;
}

void NnController::validate() const {
  require(weights.size() >= 2, "NnController: need at least one hidden layer");
  for (size_t i = 0; i + 1 < weights.size(); ++i)
    require(weights[i + 1].cols() == weights[i].rows(),
            "NnController: inconsistent layer dimensions at layer " + std::to_string(i + 1));
  if (activation == Activation::LeakyRelu)
    require(leak > 0.0 && leak < 1.0, "NnController: leaky-relu slope must be in (0,1)");
  for (const auto& w : weights) require(w.allFinite(), "NnController: non-finite weight");
}

NnController init_nn(int input_dim, const std::vector<int>& hidden, int output_dim,
                     Activation act, std::uint64_t seed, double leak) {
  require(input_dim >= 1 && output_dim >= 1 && !hidden.empty(),
          "init_nn: dimensions must be positive, at least one hidden layer");
  NnController nn;
  nn.activation = act;
  nn.leak = leak;
  Rng rng(seed);
  int prev = input_dim;
  std::vector<int> rows = hidden;
  rows.push_back(output_dim);
  for (int r : rows) {
    require(r >= 1, "init_nn: layer widths must be positive");
    const double gamma = 1.0 / std::sqrt(static_cast<double>(prev));
    Matrix w(r, prev);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < prev; ++j) w(i, j) = uniform(rng, -gamma, gamma);
    nn.weights.push_back(std::move(w));
    prev = r;
  }
  nn.validate();
  return nn;
}

Vector forward(const NnController& nn, const Vector& x) {
  require(x.size() == nn.input_dim(), "forward: input dimension mismatch");
  require(x.allFinite(), "forward: non-finite input");
  Vector w = x;
  for (size_t i = 0; i + 1 < nn.weights.size(); ++i) {
    Vector v = nn.weights[i] * w;
    w.resize(v.size());
    for (int j = 0; j < v.size(); ++j) w(j) = activate(nn.activation, nn.leak, v(j));
  }
  return nn.weights.back() * w;
}

ActivationTrace activations(const NnController& nn, const Vector& x) {
  require(x.size() == nn.input_dim(), "activations: input dimension mismatch");
  require(x.allFinite(), "activations: non-finite input");
  const int n_phi = nn.phi_dim();
  ActivationTrace trace;
  trace.v_phi.resize(n_phi);
  trace.w_phi.resize(n_phi);
  Vector w = x;
  int offset = 0;
  for (size_t i = 0; i + 1 < nn.weights.size(); ++i) {
    Vector v = nn.weights[i] * w;
    w.resize(v.size());
    for (int j = 0; j < v.size(); ++j) {
      trace.v_phi(offset + j) = v(j);
      w(j) = activate(nn.activation, nn.leak, v(j));
      trace.w_phi(offset + j) = w(j);
    }
    offset += static_cast<int>(v.size());
  }
  return trace;
}

WeightMatrixN assemble_n(const NnController& nn) {
  nn.validate();
  const int n_g = nn.input_dim();
  const int n_u = nn.output_dim();
  const int n_phi = nn.phi_dim();
  const auto sizes = nn.layer_sizes();
  const int ell = static_cast<int>(sizes.size());

  WeightMatrixN n;
  n.layer_sizes = sizes;
  n.n_ux = Matrix::Zero(n_u, n_g);
  n.n_uw = Matrix::Zero(n_u, n_phi);
  n.n_vx = Matrix::Zero(n_phi, n_g);
  n.n_vw = Matrix::Zero(n_phi, n_phi);

  std::vector<int> offsets(ell + 1, 0);
  for (int i = 0; i < ell; ++i) offsets[i + 1] = offsets[i] + sizes[i];

  n.n_vx.topRows(sizes[0]) = nn.weights[0];
  for (int i = 1; i < ell; ++i)
    n.n_vw.block(offsets[i], offsets[i - 1], sizes[i], sizes[i - 1]) = nn.weights[i];
  n.n_uw.rightCols(sizes[ell - 1]) = nn.weights[ell];
  return n;
}

double mse_loss(const NnController& nn, const DataPairs& data) {
  require(!data.empty(), "mse_loss: empty dataset");
  double acc = 0.0;
  for (const auto& [x, u] : data) acc += (forward(nn, x) - u).squaredNorm();
  return acc / static_cast<double>(data.size());
}

std::vector<Matrix> grad_mse(const NnController& nn, const DataPairs& data) {
  require(!data.empty(), "grad_mse: empty dataset");
  const size_t num_layers = nn.weights.size();
  std::vector<Matrix> grad;
  grad.reserve(num_layers);
  for (const auto& w : nn.weights) grad.push_back(Matrix::Zero(w.rows(), w.cols()));

  std::vector<Vector> layer_in(num_layers);   // input to each weight matrix
  std::vector<Vector> layer_pre(num_layers);  // pre-activation of hidden layers
  for (const auto& [x, u_star] : data) {
    Vector w = x;
    for (size_t i = 0; i < num_layers; ++i) {
      layer_in[i] = w;
      Vector v = nn.weights[i] * w;
      if (i + 1 < num_layers) {
        layer_pre[i] = v;
        w.resize(v.size());
        for (int j = 0; j < v.size(); ++j) w(j) = activate(nn.activation, nn.leak, v(j));
      } else {
        w = v;
      }
    }
    // d/du of ||u - u*||^2 = 2 (u - u*)
    Vector delta = 2.0 * (w - u_star);
    for (size_t i = num_layers; i-- > 0;) {
      grad[i] += delta * layer_in[i].transpose();
      if (i == 0) break;
      delta = nn.weights[i].transpose() * delta;
      for (int j = 0; j < delta.size(); ++j)
        delta(j) *= activate_deriv(nn.activation, nn.leak, layer_pre[i - 1](j));
    }
  }
  for (auto& g : grad) g /= static_cast<double>(data.size());
  return grad;
}

AdamState AdamState::init(const NnController& nn, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  for (const auto& w : nn.weights) {
    s.m.push_back(Matrix::Zero(w.rows(), w.cols()));
    s.v.push_back(Matrix::Zero(w.rows(), w.cols()));
  }
  return s;
}

std::pair<AdamState, NnController> adam_step(AdamState state, const NnController& nn,
                                             const std::vector<Matrix>& gradient) {
  require(gradient.size() == nn.weights.size(), "adam_step: gradient shape mismatch");
  NnController out = nn;
  state.step += 1;
  const auto& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < gradient.size(); ++i) {
    require(gradient[i].rows() == nn.weights[i].rows() &&
                gradient[i].cols() == nn.weights[i].cols(),
            "adam_step: gradient shape mismatch at layer " + std::to_string(i));
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * gradient[i];
    state.v[i] = c.beta2 * state.v[i].array().matrix() +
                 (1.0 - c.beta2) * gradient[i].cwiseProduct(gradient[i]);
    const Matrix m_hat = state.m[i] / bc1;
    const Matrix v_hat = state.v[i] / bc2;
    out.weights[i] -=
        c.rate * (m_hat.array() / (v_hat.array().sqrt() + c.eps)).matrix();
  }
  return {std::move(state), std::move(out)};
}

void save_weights_json(const NnController& nn, const std::string& path) {
  nlohmann::json j;
  j["activation"] = activation_name(nn.activation);
  if (nn.activation == Activation::LeakyRelu) j["leak"] = nn.leak;
  j["layers"] = nlohmann::json::array();
  for (const auto& w : nn.weights) {
    nlohmann::json layer;
    layer["rows"] = w.rows();
    layer["cols"] = w.cols();
    std::vector<double> data;
    data.reserve(static_cast<size_t>(w.size()));
    for (int i = 0; i < w.rows(); ++i)
      for (int j2 = 0; j2 < w.cols(); ++j2) data.push_back(w(i, j2));
    layer["data"] = data;
    j["layers"].push_back(std::move(layer));
  }
  std::ofstream out(path);
  require(out.good(), "save_weights_json: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

NnController load_weights_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_weights_json: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_weights_json: parse error in '" + path + "': " + e.what());
  }
  NnController nn;
  try {
    nn.activation = activation_from_name(j.at("activation").get<std::string>());
    if (j.contains("leak")) nn.leak = j.at("leak").get<double>();
    for (const auto& layer : j.at("layers")) {
      const int rows = layer.at("rows").get<int>();
      const int cols = layer.at("cols").get<int>();
      const auto data = layer.at("data").get<std::vector<double>>();
      require(static_cast<int>(data.size()) == rows * cols,
              "load_weights_json: layer data size mismatch");
      Matrix w(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) w(i, c) = data[static_cast<size_t>(i) * cols + c];
      nn.weights.push_back(std::move(w));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_weights_json: malformed weight file '" + path + "': " + e.what());
  }
  nn.validate();
  return nn;
}

}  // namespace safeil

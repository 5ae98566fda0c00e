#include "safeil/config.hpp"

#include <cmath>

namespace safeil {

LtiPlant preset_plant(const std::string& name, const TomlTable& t) {
  if (name == "pendulum") {
    const double m = t.get_double_or("plant.m", 0.15);
    const double l = t.get_double_or("plant.l", 0.5);
    const double mu = t.get_double_or("plant.mu", 0.5);
    const double delta = t.get_double_or("plant.delta", 0.02);
    const double g = t.get_double_or("plant.g", 9.81);
    require(m > 0.0 && l > 0.0 && delta > 0.0, "plant: pendulum constants must be positive");
    Matrix a(2, 2), b(2, 1);
    a << 1.0, delta, g * delta / l, 1.0 - mu * delta / (m * l * l);
    b << 0.0, delta / (m * l * l);
    return LtiPlant(a, b);
  }
  if (name == "gtm") {
    Matrix a(2, 2), b(2, 1);
    a << 0.935, 0.019, -0.907, 0.913;
    b << -0.006, -1.120;
    return LtiPlant(a, b);
  }
  throw Error("plant.preset: unknown preset '" + name + "' (expected pendulum or gtm)");
}

Polytope preset_polytope(const std::string& name) {
  if (name == "pendulum") {
    Vector h(2);
    h << 2.5, 6.0;
    return Polytope(Matrix::Identity(2, 2), h);
  }
  if (name == "gtm") {
    Vector h(2);
    h << 2.0, 3.0;
    return Polytope(Matrix::Identity(2, 2), h);
  }
  throw Error("constraints: no preset polytope for '" + name + "'");
}

namespace {

LtiPlant plant_from_toml(const TomlTable& t) {
  if (t.has("plant.preset")) return preset_plant(t.get_string("plant.preset"), t);
  require(t.has("plant.a") && t.has("plant.b"),
          "plant: provide either plant.preset or plant.a and plant.b");
  const Matrix a = t.get_matrix("plant.a");
  const Matrix b = t.get_matrix("plant.b");
  require(a.rows() == a.cols(), "plant.a: must be square");
  require(b.rows() == a.rows(), "plant.b: row count must match plant.a");
  return LtiPlant(a, b);
}

Polytope polytope_from_toml(const TomlTable& t, const LtiPlant& plant) {
  Matrix h_mat;
  Vector h_vec;
  if (t.has("constraints.h_mat") || t.has("constraints.h_vec")) {
    h_mat = t.get_matrix("constraints.h_mat");
    h_vec = t.get_vector("constraints.h_vec");
  } else if (t.has("plant.preset")) {
    return preset_polytope(t.get_string("plant.preset"));
  } else {
    throw Error("constraints: h_mat and h_vec are required for custom plants");
  }
  require(h_mat.cols() == plant.state_dim(), "constraints.h_mat: column count must equal n_G");
  require(h_mat.rows() == h_vec.size(), "constraints.h_vec: length must match h_mat rows");
  require((h_vec.array() >= 0.0).all(), "constraints.h_vec: entries must be nonnegative");
  return Polytope(h_mat, h_vec);
}

}  // namespace

RunConfig config_from_toml(const TomlTable& t) {
  LtiPlant plant = plant_from_toml(t);
  Polytope poly = polytope_from_toml(t, plant);

  std::vector<int> hidden;
  for (long long v : t.get_int_array("nn.layers")) {
    require(v >= 1 && v <= 4096, "nn.layers: widths must be in [1, 4096]");
    hidden.push_back(static_cast<int>(v));
  }
  require(!hidden.empty(), "nn.layers: at least one hidden layer");

  RunConfig cfg{std::move(plant),
                std::move(poly),
                std::move(hidden),
                activation_from_name(t.get_string_or("nn.activation", "tanh")),
                t.get_double_or("nn.leak", 0.01),
                AdmmConfig{},
                DatasetSpec{},
                SimulateSpec{},
                t.get_string_or("run.out_dir", "out"),
                static_cast<std::uint64_t>(t.get_int_or("run.seed", 1))};

  if (cfg.activation == Activation::LeakyRelu)
    require(cfg.leak > 0.0 && cfg.leak < 1.0, "nn.leak: must be in (0, 1)");

  cfg.admm.rho = t.get_double_or("admm.rho", 1.0);
  cfg.admm.eta1 = t.get_double_or("admm.eta1", 1.0);
  cfg.admm.eta2 = t.get_double_or("admm.eta2", 1.0);
  cfg.admm.sigma = t.get_double_or("admm.sigma", 0.0);
  cfg.admm.max_outer_iters = static_cast<int>(t.get_int_or("admm.max_outer_iters", 40));
  cfg.admm.n_update_epochs = static_cast<int>(t.get_int_or("admm.n_update_epochs", 200));
  cfg.admm.pretrain_epochs = static_cast<int>(t.get_int_or("admm.pretrain_epochs", 0));
  cfg.admm.cert_shift = t.get_double_or("admm.cert_shift", 1e-6);
  cfg.admm.seed = cfg.seed;
  cfg.admm.adam.rate = t.get_double_or("adam.rate", 1e-3);
  cfg.admm.adam.beta1 = t.get_double_or("adam.beta1", 0.9);
  cfg.admm.adam.beta2 = t.get_double_or("adam.beta2", 0.999);
  cfg.admm.adam.eps = t.get_double_or("adam.eps", 1e-8);
  require(cfg.admm.adam.beta1 > 0.0 && cfg.admm.adam.beta1 < 1.0, "adam.beta1: must be in (0,1)");
  require(cfg.admm.adam.beta2 > 0.0 && cfg.admm.adam.beta2 < 1.0, "adam.beta2: must be in (0,1)");
  require(cfg.admm.adam.eps > 0.0, "adam.eps: must be > 0");
  cfg.admm.sdp.mu_final = t.get_double_or("sdp.mu_final", 1e-8);
  cfg.admm.sdp.max_newton_total = static_cast<int>(t.get_int_or("sdp.max_newton_total", 4000));
  require(cfg.admm.sdp.mu_final > 0.0, "sdp.mu_final: must be > 0");
  cfg.admm.validate();

  const std::string source = t.get_string_or("dataset.source", "grid");
  if (source == "grid") {
    cfg.dataset.source = DatasetSpec::Source::Grid;
  } else if (source == "csv") {
    cfg.dataset.source = DatasetSpec::Source::Csv;
    cfg.dataset.csv_path = t.get_string("dataset.csv_path");
  } else {
    throw Error("dataset.source: expected 'grid' or 'csv'");
  }
  cfg.dataset.per_axis = static_cast<int>(t.get_int_or("dataset.per_axis", 21));
  require(cfg.dataset.per_axis >= 2, "dataset.per_axis: must be at least 2");
  const int n_g = cfg.plant.state_dim();
  const int n_u = cfg.plant.input_dim();
  cfg.dataset.lqr_q =
      t.has("dataset.lqr_q") ? t.get_matrix("dataset.lqr_q") : Matrix(Matrix::Identity(n_g, n_g));
  cfg.dataset.lqr_r =
      t.has("dataset.lqr_r") ? t.get_matrix("dataset.lqr_r") : Matrix(Matrix::Identity(n_u, n_u));
  require(cfg.dataset.lqr_q.rows() == n_g && cfg.dataset.lqr_q.cols() == n_g,
          "dataset.lqr_q: must be n_G x n_G");
  require(cfg.dataset.lqr_r.rows() == n_u && cfg.dataset.lqr_r.cols() == n_u,
          "dataset.lqr_r: must be n_u x n_u");

  cfg.sim.k_max = static_cast<int>(t.get_int_or("simulate.k_max", 2000));
  cfg.sim.stop_norm = t.get_double_or("simulate.stop_norm", 1e-3);
  require(cfg.sim.k_max >= 1, "simulate.k_max: must be >= 1");
  require(cfg.sim.stop_norm >= 0.0, "simulate.stop_norm: must be >= 0");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  return config_from_toml(TomlTable::parse_file(path));
}

Dataset build_dataset(const RunConfig& cfg) {
  if (cfg.dataset.source == DatasetSpec::Source::Csv) {
    Dataset data = load_csv(cfg.dataset.csv_path);
    require(!data.pairs.empty(), "dataset: CSV file contains no rows");
    require(data.state_dim() == cfg.plant.state_dim(),
            "dataset: CSV state dimension does not match the plant");
    require(data.control_dim() == cfg.plant.input_dim(),
            "dataset: CSV control dimension does not match the plant");
    return data;
  }
  const LinearGain gain =
      dlqr(cfg.plant, symmetrize(cfg.dataset.lqr_q), symmetrize(cfg.dataset.lqr_r));
  return generate_grid_dataset(gain, cfg.poly, cfg.dataset.per_axis);
}

}  // namespace safeil

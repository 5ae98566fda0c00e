#pragma once

#include <string>
#include <vector>

#include "safeil/admm.hpp"
#include "safeil/common.hpp"
#include "safeil/nn.hpp"
#include "safeil/plant.hpp"
#include "safeil/toml_reader.hpp"

namespace safeil {

struct DatasetSpec {
  enum class Source { Grid, Csv };
  Source source = Source::Grid;
  int per_axis = 21;
  std::string csv_path;
  Matrix lqr_q;  // LQR expert weights; identity when left empty
  Matrix lqr_r;
};

struct SimulateSpec {
  int k_max = 2000;
  double stop_norm = 1e-3;
};

struct RunConfig {
  LtiPlant plant;
  Polytope poly;
  std::vector<int> hidden;
  Activation activation = Activation::Tanh;
  double leak = 0.01;
  AdmmConfig admm;
  DatasetSpec dataset;
  SimulateSpec sim;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

/// Built-in plants: "pendulum" (inverted pendulum, g = 9.81 by default,
/// overridable) and "gtm" (aircraft longitudinal dynamics).
LtiPlant preset_plant(const std::string& name, const TomlTable& t);
Polytope preset_polytope(const std::string& name);

RunConfig load_config(const std::string& path);
RunConfig config_from_toml(const TomlTable& t);

/// Build the expert dataset described by the config (LQR grid or CSV).
Dataset build_dataset(const RunConfig& cfg);

}  // namespace safeil

#include "safeil/expert.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace safeil {

LinearGain dlqr(const LtiPlant& plant, const SymMatrix& qc, const SymMatrix& rc) {
  const int n = plant.state_dim();
  const int m = plant.input_dim();
  require(qc.dim() == n, "dlqr: Q dimension mismatch");
  require(rc.dim() == m, "dlqr: R dimension mismatch");
  require(is_pos_def(rc), "dlqr: R must be positive definite");

  const Matrix& a = plant.a_g;
  const Matrix& b = plant.b_g;
  const Matrix at = a.transpose();
  const Matrix bt = b.transpose();

  Matrix p = qc.mat();
  constexpr int kMaxIter = 500000;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const Matrix gain_den = rc.mat() + bt * p * b;
    const Matrix p_next =
        at * p * a - at * p * b * solve_pd(symmetrize(gain_den), bt * p * a) + qc.mat();
    const double diff = (p_next - p).cwiseAbs().maxCoeff();
    p = 0.5 * (p_next + p_next.transpose().eval());
    if (!p.allFinite() || p.cwiseAbs().maxCoeff() > 1e12)
      throw Error("dlqr: Riccati iteration diverged (pair not stabilizable)");
    if (diff <= 1e-10 * (1.0 + p.cwiseAbs().maxCoeff())) {
      const Matrix k = solve_pd(symmetrize(rc.mat() + bt * p * b), bt * p * a);
      return LinearGain{k};
    }
  }
  throw Error("dlqr: Riccati iteration did not converge");
}

Dataset generate_grid_dataset(const LinearGain& gain, const Polytope& poly, int per_axis) {
  require(per_axis >= 2, "generate_grid_dataset: per_axis must be at least 2");
  const int n = poly.state_dim();
  require(n <= 3, "generate_grid_dataset: tensor grids supported only for n_G <= 3");
  require(gain.k.cols() == n, "generate_grid_dataset: gain dimension mismatch");

  const auto [lo, hi] = bounding_box(poly);
  Dataset out;
  out.provenance = "lqr-grid per_axis=" + std::to_string(per_axis);

  std::vector<int> idx(n, 0);
  Vector x(n);
  for (;;) {
    for (int d = 0; d < n; ++d)
      x(d) = lo(d) + (hi(d) - lo(d)) * static_cast<double>(idx[d]) / (per_axis - 1);
    if (contains(poly, x)) out.pairs.emplace_back(x, Vector(-gain.k * x));
    int d = n - 1;
    for (; d >= 0; --d) {
      if (++idx[d] < per_axis) break;
      idx[d] = 0;
    }
    if (d < 0) break;
  }
  return out;
}

namespace {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_csv(const Dataset& dataset, const std::string& path) {
  require(!dataset.pairs.empty(), "save_csv: empty dataset");
  std::ofstream out(path);
  require(out.good(), "save_csv: cannot open '" + path + "'");
  const int n = dataset.state_dim();
  const int m = dataset.control_dim();
  for (int i = 0; i < n; ++i) out << "x" << i + 1 << ",";
  for (int i = 0; i < m; ++i) out << "u" << i + 1 << (i + 1 == m ? "" : ",");
  out << "\n";
  for (const auto& [x, u] : dataset.pairs) {
    for (int i = 0; i < n; ++i) out << format_g17(x(i)) << ",";
    for (int i = 0; i < m; ++i) out << format_g17(u(i)) << (i + 1 == m ? "" : ",");
    out << "\n";
  }
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_csv: cannot open '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "load_csv: empty file");

  // header x1..xn,u1..um
  int n = 0, m = 0;
  {
    std::stringstream ss(line);
    std::string tok;
    bool in_controls = false;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty() && tok.front() == 'x' && !in_controls)
        ++n;
      else if (!tok.empty() && tok.front() == 'u') {
        in_controls = true;
        ++m;
      } else {
        throw Error("load_csv: malformed header column '" + tok + "'");
      }
    }
    require(n >= 1 && m >= 1, "load_csv: header must list x1..xn,u1..um");
  }

  Dataset out;
  out.provenance = "csv:" + path;
  int row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    Vector x(n), u(m);
    for (int i = 0; i < n + m; ++i) {
      require(static_cast<bool>(std::getline(ss, tok, ',')),
              "load_csv: row " + std::to_string(row_number) + " has too few columns");
      size_t pos = 0;
      double value = 0.0;
      try {
        value = std::stod(tok, &pos);
      } catch (const std::exception&) {
        throw Error("load_csv: row " + std::to_string(row_number) + ": bad number '" + tok + "'");
      }
      require(pos == tok.size(),
              "load_csv: row " + std::to_string(row_number) + ": bad number '" + tok + "'");
      require(std::isfinite(value),
              "load_csv: row " + std::to_string(row_number) + ": non-finite value");
      if (i < n)
        x(i) = value;
      else
        u(i - n) = value;
    }
    require(!std::getline(ss, tok, ','),
            "load_csv: row " + std::to_string(row_number) + " has too many columns");
    out.pairs.emplace_back(std::move(x), std::move(u));
  }
  return out;
}

}  // namespace safeil

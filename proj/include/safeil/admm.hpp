#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "safeil/bounds.hpp"
#include "safeil/expert.hpp"
#include "safeil/lmi.hpp"
#include "safeil/looptrans.hpp"
#include "safeil/nn.hpp"
#include "safeil/plant.hpp"
#include "safeil/sdp.hpp"

namespace safeil {

struct AdmmConfig {
  double rho = 1.0;
  double eta1 = 1.0;
  double eta2 = 1.0;
  double sigma = 0.0;  // <= 0 selects the default 0.1 * ||f(N0) Q0||_F
  int max_outer_iters = 40;
  int n_update_epochs = 200;
  int pretrain_epochs = 0;  // plain imitation epochs before the first iteration
  AdamConfig adam;
  std::uint64_t seed = 1;
  SolverParams sdp;
  double cert_shift = 1e-6;  // strictness shift for the final certification LMI

  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  double residual_f = 0.0;      // ||f(N) Q - L||_F  (termination quantity)
  double residual_paper = 0.0;  // ||f(N) - L Q^{-1}||_F (reported form)
  double mse = 0.0;
  double logdet_q1 = 0.0;
  int newton_iters = 0;
  std::uint64_t sector_hash = 0;  // hash of the bounds/sectors frozen this iteration
};

struct AdmmState {
  NnController nn;
  SynthesisVars q;
  Matrix y;
  int iteration = 0;
  std::vector<IterationRecord> history;
  bool converged = false;
  double sigma_used = 0.0;
};

/// Certificate extracted from the final certification pass: (P, lambda) for
/// the transformed Lyapunov LMI plus its checked margins.
struct Certificate {
  SymMatrix p;
  Vector lambda;
  double stability_margin = 0.0;  // min eig of the negated transformed LMI
  Vector safety_slacks;
  double logdet_q1 = 0.0;
};

struct RunResult {
  NnController nn;
  std::optional<Certificate> certificate;
  AdmmState state;
};

std::uint64_t sector_hash(const IntervalBounds& b, const SectorBounds& s);

/// Augmented loss of the constrained learning problem. When terms is
/// non-null the four components (imitation, volume, multiplier, penalty)
/// are written out separately.
double augmented_loss(const NnController& nn, const SynthesisVars& q, const Matrix& y,
                      const AdmmConfig& cfg, const DataPairs& data, const SectorBounds& sectors,
                      double* terms = nullptr);

/// Gradient (per weight matrix) of tr(Y^T f(N) Q) + rho/2 ||f(N) Q - L||_F^2
/// with the sectors held constant.
std::vector<Matrix> grad_f_terms(const NnController& nn, const SectorBounds& sectors,
                                 const SynthesisVars& q, const Matrix& y, double rho);

/// N-update: epochs of Adam on the augmented loss, returning the epoch
/// iterate with the lowest augmented loss.
NnController n_update(const NnController& nn, const SynthesisVars& q, const Matrix& y,
                      const AdmmConfig& cfg, const DataPairs& data, const SectorBounds& sectors);

/// (Q,L)-update: thin wrapper over the SDP subproblem.
std::pair<SynthesisVars, SolverReport> ql_update(const NnController& nn,
                                                 const SectorBounds& sectors, const Matrix& y,
                                                 const AdmmConfig& cfg, const LtiPlant& plant,
                                                 const Polytope& poly,
                                                 const std::optional<SynthesisVars>& warm);

Matrix y_update(const Matrix& y, double rho, const Matrix& residual);

/// Full pipeline: pretrain, alternate N / (Q,L) / Y updates until the
/// coupling residual drops below sigma, then run an independent
/// certification pass against f(N_final).
RunResult run(const AdmmConfig& cfg, const LtiPlant& plant, const Polytope& poly,
              const Dataset& data, const NnController& init_nn, std::ostream* log = nullptr);

/// Validate a certificate against the actual network: transformed-LMI
/// margin, safety slacks, and seeded rollouts from E(P).
struct CertificateCheck {
  bool lmi_ok = false;
  bool safety_ok = false;
  bool rollouts_ok = false;
  int rollout_failures = 0;
  bool ok() const { return lmi_ok && safety_ok && rollouts_ok; }
};
CertificateCheck check_certificate(const Certificate& cert, const LtiPlant& plant,
                                   const Polytope& poly, const NnController& nn, int num_rollouts,
                                   int k_max, double stop_norm, std::uint64_t seed);

void write_history_csv(const AdmmState& state, const std::string& path);
void write_certificate_json(const Certificate& cert, const std::string& path);
Certificate load_certificate_json(const std::string& path);

}  // namespace safeil

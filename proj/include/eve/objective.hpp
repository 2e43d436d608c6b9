#pragma once

#include <vector>

#include "eve/graph.hpp"
#include "eve/model.hpp"

namespace eve {

struct BandConfig {
  double mu2_target = 0.10;
  double band_low = 0.05;    // 0.5 * mu2_target
  double band_high = 0.20;   // 2 * mu2_target
  double lambda_band = 4e-3;
  double lambda_band_high = 2.05;
  double lambda_local = 3e-2;

  void validate() const;
};

struct BandStats {
  double band = 0.0;  // includes lambda_band_high on the upper hinge
  double frac_low = 0.0;
  double frac_high = 0.0;
  double occupancy = 1.0;
  std::vector<double> unit_mu2;
};

struct LossBreakdown {
  double ce = 0.0;
  double kl_raw = 0.0;
  double reg_kl = 0.0;
  double local_recon = 0.0;
  double band = 0.0;
  double total = 0.0;
  double beta = 1.0;
};

struct RegulatorConfig {
  double beta_init = 1.0;
  double beta_min = 1e-3;
  double beta_max = 10.0;
  double kl_per_unit_low = 0.05;
  double kl_per_unit_high = 1.0;
  double thermostat_step = 1.05;
  double scale_min = 0.5;
  double scale_max = 2.0;
  double ema = 0.5;  // weight of the new epoch diagnostic
};

struct RegulatorState {
  double beta = 1.0;
  double high_threshold = 0.20;    // band_high, injected by the trainer
  std::vector<double> unit_scale;  // per latent unit, in [scale_min, scale_max]
  // running validation-view means
  double run_kl_per_unit = 0.0;
  double run_mu2 = 0.0;
  double run_occupancy = 0.0;
  double run_frac_low = 0.0;
  double run_frac_high = 0.0;
  std::vector<double> run_unit_mu2;
  bool has_running = false;

  static RegulatorState init(std::size_t latent_dim, const RegulatorConfig& cfg);
};

struct EpochDiagnostics {
  double kl_per_unit = 0.0;
  double mu2_mean = 0.0;
  double occupancy = 1.0;
  double frac_low = 0.0;
  double frac_high = 0.0;
  std::vector<double> unit_mu2;
};

// --- value-level signals -------------------------------------------------

struct KlResult {
  std::vector<double> per_unit;
  double sum = 0.0;
};

// Closed-form diagonal-Gaussian KL(q || p), per unit and summed.
KlResult kl_gaussian(const std::vector<double>& mu_q, const std::vector<double>& sigma_q,
                     const std::vector<double>& mu_p, const std::vector<double>& sigma_p);

double local_recon_mse(const Tensor& h, const Tensor& h_hat);
// Selection-facing activity proxy in (0, 1]; higher is better.
inline double local_activity_proxy(double mse) { return 1.0 / (1.0 + mse); }

// mu is [B, U] (or [1, U]); per-unit mu^2 is averaged over rows before the
// band comparison. unit_scales (optional) weight the upper hinge per unit.
BandStats band_penalty(const Tensor& mu, const BandConfig& cfg,
                       const std::vector<double>* unit_scales = nullptr);

// --- graph-level loss ----------------------------------------------------

struct LossNodes {
  NodeId total = -1;
  NodeId ce = -1;
  NodeId kl = -1;     // raw KL (before beta)
  NodeId local = -1;  // MSE term
  NodeId band = -1;
  BandStats band_stats;
};

NodeId kl_gaussian_node(Graph& g, NodeId mu_q, NodeId logsig_q, NodeId mu_p, NodeId logsig_p);
NodeId local_recon_node(Graph& g, NodeId h, NodeId h_hat);
// Returns the differentiable band node; forward stats via out_stats.
NodeId band_penalty_node(Graph& g, NodeId mu, const BandConfig& cfg,
                         const std::vector<double>& unit_scales, BandStats* out_stats);

// Builds the full training objective over mc passes (EVE) or plain CE (DET).
LossNodes build_loss(Graph& g, const Model& model, const std::map<std::string, NodeId>& pnodes,
                     const Tensor& input, const std::vector<int>& targets,
                     const std::vector<Tensor>& eps_draws, const BandConfig& band,
                     const RegulatorState& reg);

// Reads values out of the loss nodes, validates finiteness term by term and
// the reassembly identity (1e-9).
LossBreakdown breakdown_from(const Graph& g, const LossNodes& nodes, const BandConfig& band,
                             double beta, bool variational);

// Once-per-epoch homeostatic update (beta thermostat + per-unit regulator).
RegulatorState autopilot_step(RegulatorState reg, const EpochDiagnostics& diag,
                              const RegulatorConfig& cfg);

}  // namespace eve

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eve/model.hpp"
#include "eve/objective.hpp"

namespace eve {

struct UncertaintyReadout {
  double predictive_entropy = 0.0;
  double conditional_entropy = 0.0;
  double mutual_information = 0.0;
  double epi = 0.0;
  double top1_flip_rate_mc = 0.0;
  double confidence = 0.0;
  double nll = 0.0;
  bool correct = false;
};

struct EvalSummary {
  double ce = 0.0, nll = 0.0, ppl = 1.0, acc = 0.0;
  double ece = 0.0, cvar_nll = 0.0;
  double kl = 0.0, local = 0.0;
  double mu2_mean_eval = 0.0;
  double band_occupancy = 0.0, frac_low = 0.0, frac_too_high = 0.0;
  double mean_mi = 0.0, mean_epi = 0.0, mean_flip = 0.0;
  std::vector<double> unit_mu2;  // per-unit mean mu^2 (regulator input)
};

struct EvalResult {
  EvalSummary summary;
  std::vector<UncertaintyReadout> readouts;
};

// One example's MC statistics. pass_probs is M rows of a vocab distribution.
// M = 1 yields MI = flip = epi = 0 by convention.
UncertaintyReadout predictive_readout(const std::vector<std::vector<double>>& pass_probs,
                                      int target);

// Expected calibration error over equal-width confidence bins.
double ece(const std::vector<double>& confidences, const std::vector<bool>& correct,
           std::size_t bins = 15);

// Mean of the worst ceil(alpha*N) negative log-likelihoods.
double cvar_nll(std::vector<double> nlls, double alpha = 0.05);

struct LatentDiagnostics {
  double mu2_mean = 0.0;
  double occupancy = 0.0, frac_low = 0.0, frac_too_high = 0.0;
  double kl = 0.0, local = 0.0;
  std::vector<double> unit_mu2;
};

// Fixed observation protocol shared by every candidate checkpoint: same
// front end, context length, M and seed discipline.
EvalResult canonical_eval(const Model& model, const std::vector<Example>& eval_set,
                          const BandConfig& band, std::size_t M, std::uint64_t seed,
                          std::size_t batch_size = 48);

LatentDiagnostics eval_latent_diagnostics(const EvalSummary& s);

void export_readouts_csv(const std::string& path, const std::vector<UncertaintyReadout>& rows);

}  // namespace eve

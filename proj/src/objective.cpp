#include "eve/objective.hpp"

#include <cmath>

#include "eve/error.hpp"

namespace eve {

void BandConfig::validate() const {
  if (!(band_low > 0.0 && band_low < mu2_target && mu2_target < band_high))
    throw ConfigError("band: need 0 < band_low < mu2_target < band_high");
  if (lambda_band < 0.0 || lambda_band_high < 0.0 || lambda_local < 0.0)
    throw ConfigError("band: lambdas must be >= 0");
}

KlResult kl_gaussian(const std::vector<double>& mu_q, const std::vector<double>& sigma_q,
                     const std::vector<double>& mu_p, const std::vector<double>& sigma_p) {
  const std::size_t n = mu_q.size();
  if (sigma_q.size() != n || mu_p.size() != n || sigma_p.size() != n)
    throw ContractViolation("kl_gaussian: length mismatch");
  KlResult r;
  r.per_unit.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sigma_q[i] > 0.0 && sigma_p[i] > 0.0))
      throw ContractViolation("kl_gaussian: sigma must be positive");
    const double vr = (sigma_q[i] * sigma_q[i]) / (sigma_p[i] * sigma_p[i]);
    const double md = (mu_q[i] - mu_p[i]) / sigma_p[i];
    r.per_unit[i] = 0.5 * (vr + md * md - 1.0) + std::log(sigma_p[i] / sigma_q[i]);
    r.sum += r.per_unit[i];
  }
  return r;
}

double local_recon_mse(const Tensor& h, const Tensor& h_hat) {
  if (!h.same_shape(h_hat)) throw ContractViolation("local_recon: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < h.v.size(); ++i) {
    const double d = h.v[i] - h_hat.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(h.v.size());
}

BandStats band_penalty(const Tensor& mu, const BandConfig& cfg,
                       const std::vector<double>* unit_scales) {
  cfg.validate();
  const std::size_t B = mu.rows(), U = mu.cols();
  BandStats s;
  s.unit_mu2.assign(U, 0.0);
  for (std::size_t u = 0; u < U; ++u) {
    double acc = 0.0;
    for (std::size_t b = 0; b < B; ++b) acc += mu.at(b, u) * mu.at(b, u);
    s.unit_mu2[u] = acc / static_cast<double>(B);
  }
  double low = 0.0, high = 0.0;
  std::size_t n_low = 0, n_high = 0;
  for (std::size_t u = 0; u < U; ++u) {
    const double m2 = s.unit_mu2[u];
    const double sc = unit_scales ? (*unit_scales)[u] : 1.0;
    low += std::max(0.0, cfg.band_low - m2);
    high += sc * std::max(0.0, m2 - cfg.band_high);
    if (m2 < cfg.band_low) ++n_low;
    if (m2 > cfg.band_high) ++n_high;
  }
  s.band = low / static_cast<double>(U) + cfg.lambda_band_high * high / static_cast<double>(U);
  s.frac_low = static_cast<double>(n_low) / static_cast<double>(U);
  s.frac_high = static_cast<double>(n_high) / static_cast<double>(U);
  s.occupancy = 1.0 - s.frac_low - s.frac_high;
  return s;
}

NodeId kl_gaussian_node(Graph& g, NodeId mu_q, NodeId logsig_q, NodeId mu_p, NodeId logsig_p) {
  // kl = b - a + 0.5*(exp(2a - 2b) + (mu_q - mu_p)^2 * exp(-2b) - 1)
  const std::size_t B = g.shape(mu_q)[0];
  NodeId diff = g.sub(mu_q, mu_p);
  NodeId d2 = g.mul(diff, diff);
  NodeId e2ab = g.exp_op(g.scale(g.sub(logsig_q, logsig_p), 2.0));
  NodeId emb = g.exp_op(g.scale(logsig_p, -2.0));
  NodeId inner = g.add_const(g.add(e2ab, g.mul(d2, emb)), -1.0);
  NodeId kl = g.add(g.sub(logsig_p, logsig_q), g.scale(inner, 0.5));
  // mean over batch of per-unit sums
  return g.scale(g.sum_all(kl), 1.0 / static_cast<double>(B));
}

NodeId local_recon_node(Graph& g, NodeId h, NodeId h_hat) {
  NodeId d = g.sub(h, h_hat);
  return g.mean_all(g.mul(d, d));
}

NodeId band_penalty_node(Graph& g, NodeId mu, const BandConfig& cfg,
                         const std::vector<double>& unit_scales, BandStats* out_stats) {
  const std::size_t U = g.shape(mu)[1];
  NodeId m2 = g.mean_rows(g.mul(mu, mu));  // per-unit mean mu^2, [1,U]
  NodeId low = g.mean_all(g.hinge(g.add_const(g.scale(m2, -1.0), cfg.band_low)));
  Tensor scales({1, U});
  for (std::size_t u = 0; u < U; ++u) scales.v[u] = unit_scales.empty() ? 1.0 : unit_scales[u];
  NodeId high = g.mean_all(g.cmul(g.hinge(g.add_const(m2, -cfg.band_high)), scales));
  NodeId band = g.add(low, g.scale(high, cfg.lambda_band_high));
  if (out_stats) {
    BandStats s;
    s.unit_mu2 = g.values(m2);
    std::size_t n_low = 0, n_high = 0;
    for (double x : s.unit_mu2) {
      if (x < cfg.band_low) ++n_low;
      if (x > cfg.band_high) ++n_high;
    }
    s.band = g.values(band)[0];
    s.frac_low = static_cast<double>(n_low) / static_cast<double>(U);
    s.frac_high = static_cast<double>(n_high) / static_cast<double>(U);
    s.occupancy = 1.0 - s.frac_low - s.frac_high;
    *out_stats = s;
  }
  return band;
}

LossNodes build_loss(Graph& g, const Model& model, const std::map<std::string, NodeId>& pnodes,
                     const Tensor& input, const std::vector<int>& targets,
                     const std::vector<Tensor>& eps_draws, const BandConfig& band,
                     const RegulatorState& reg) {
  LossNodes out;
  const bool variational = model.config().variational;
  if (!variational) {
    ForwardNodes fn = model.forward(g, pnodes, input, nullptr);
    out.ce = g.softmax_xent(fn.logits, targets);
    out.total = out.ce;
    return out;
  }

  const std::size_t M = eps_draws.size();
  if (M == 0) throw ContractViolation("build_loss: EVE needs at least one eps draw");
  NodeId ce_acc = -1, local_acc = -1;
  NodeId first_mu_q = -1;
  for (std::size_t m = 0; m < M; ++m) {
    ForwardNodes fn = model.forward(g, pnodes, input, &eps_draws[m]);
    NodeId ce_m = g.softmax_xent(fn.logits, targets);
    NodeId loc_m = local_recon_node(g, fn.h_pre, fn.h_hat);
    ce_acc = (ce_acc < 0) ? ce_m : g.add(ce_acc, ce_m);
    local_acc = (local_acc < 0) ? loc_m : g.add(local_acc, loc_m);
    if (m == 0) {
      first_mu_q = fn.mu_q;
      out.kl = kl_gaussian_node(g, fn.mu_q, fn.logsig_q, fn.mu_p, fn.logsig_p);
    }
  }
  const double inv = 1.0 / static_cast<double>(M);
  out.ce = g.scale(ce_acc, inv);
  out.local = g.scale(local_acc, inv);
  out.band = band_penalty_node(g, first_mu_q, band, reg.unit_scale, &out.band_stats);
  NodeId reg_kl = g.scale(out.kl, reg.beta);
  out.total = g.add(g.add(out.ce, reg_kl),
                    g.add(g.scale(out.local, band.lambda_local),
                          g.scale(out.band, band.lambda_band)));
  return out;
}

namespace {
double term(const Graph& g, NodeId id, const char* name) {
  const double x = g.values(id)[0];
  if (!std::isfinite(x)) throw NumericError(std::string("loss term '") + name + "' is non-finite");
  return x;
}
}  // namespace

LossBreakdown breakdown_from(const Graph& g, const LossNodes& nodes, const BandConfig& band,
                             double beta, bool variational) {
  LossBreakdown b;
  b.beta = beta;
  b.ce = term(g, nodes.ce, "ce");
  b.total = term(g, nodes.total, "total");
  if (variational) {
    b.kl_raw = term(g, nodes.kl, "kl");
    b.reg_kl = beta * b.kl_raw;
    b.local_recon = term(g, nodes.local, "local_recon");
    b.band = term(g, nodes.band, "band");
  }
  const double reassembled =
      b.ce + b.reg_kl + band.lambda_local * b.local_recon + band.lambda_band * b.band;
  if (std::abs(reassembled - b.total) > 1e-9)
    throw NumericError("loss breakdown identity violated");
  return b;
}

RegulatorState RegulatorState::init(std::size_t latent_dim, const RegulatorConfig& cfg) {
  RegulatorState s;
  s.beta = cfg.beta_init;
  s.unit_scale.assign(latent_dim, 1.0);
  s.run_unit_mu2.assign(latent_dim, 0.0);
  return s;
}

RegulatorState autopilot_step(RegulatorState reg, const EpochDiagnostics& diag,
                              const RegulatorConfig& cfg) {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(diag.kl_per_unit) || !finite(diag.mu2_mean))
    throw ContractViolation("autopilot: diagnostics must be finite");

  if (!reg.has_running) {
    reg.run_kl_per_unit = diag.kl_per_unit;
    reg.run_mu2 = diag.mu2_mean;
    reg.run_occupancy = diag.occupancy;
    reg.run_frac_low = diag.frac_low;
    reg.run_frac_high = diag.frac_high;
    reg.run_unit_mu2 = diag.unit_mu2;
    reg.has_running = true;
  } else {
    const double a = cfg.ema;
    reg.run_kl_per_unit += a * (diag.kl_per_unit - reg.run_kl_per_unit);
    reg.run_mu2 += a * (diag.mu2_mean - reg.run_mu2);
    reg.run_occupancy += a * (diag.occupancy - reg.run_occupancy);
    reg.run_frac_low += a * (diag.frac_low - reg.run_frac_low);
    reg.run_frac_high += a * (diag.frac_high - reg.run_frac_high);
    if (reg.run_unit_mu2.size() == diag.unit_mu2.size())
      for (std::size_t u = 0; u < diag.unit_mu2.size(); ++u)
        reg.run_unit_mu2[u] += a * (diag.unit_mu2[u] - reg.run_unit_mu2[u]);
  }

  // beta thermostat: multiplicative, clamped
  if (reg.run_kl_per_unit > cfg.kl_per_unit_high)
    reg.beta = std::min(cfg.beta_max, reg.beta * cfg.thermostat_step);
  else if (reg.run_kl_per_unit < cfg.kl_per_unit_low)
    reg.beta = std::max(cfg.beta_min, reg.beta / cfg.thermostat_step);

  // per-unit regulator: tighten persistently-high units, relax toward 1 otherwise
  for (std::size_t u = 0; u < reg.unit_scale.size(); ++u) {
    const bool high = u < reg.run_unit_mu2.size() && reg.run_unit_mu2[u] > reg.high_threshold;
    double& sc = reg.unit_scale[u];
    if (high) {
      sc = std::min(cfg.scale_max, sc * cfg.thermostat_step);
    } else if (sc > 1.0) {
      sc = std::max(1.0, sc / cfg.thermostat_step);
    } else if (sc < 1.0) {
      sc = std::min(1.0, sc * cfg.thermostat_step);
    }
  }
  return reg;
}

}  // namespace eve

#include "eve/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "eve/error.hpp"

namespace eve {

namespace {

double entropy_of(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

std::size_t argmax_of(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;  // ties -> lowest index
  return best;
}

}  // namespace

UncertaintyReadout predictive_readout(const std::vector<std::vector<double>>& pass_probs,
                                      int target) {
  if (pass_probs.empty()) throw ContractViolation("predictive_readout: empty pass list");
  const std::size_t M = pass_probs.size(), V = pass_probs[0].size();
  std::vector<double> mean(V, 0.0);
  for (const auto& p : pass_probs)
    for (std::size_t j = 0; j < V; ++j) mean[j] += p[j];
  for (double& x : mean) x /= static_cast<double>(M);

  UncertaintyReadout r;
  r.predictive_entropy = entropy_of(mean);
  double hc = 0.0;
  for (const auto& p : pass_probs) hc += entropy_of(p);
  r.conditional_entropy = hc / static_cast<double>(M);
  const double mi_raw = r.predictive_entropy - r.conditional_entropy;
  r.mutual_information = M >= 2 ? std::max(0.0, mi_raw) : 0.0;

  const std::size_t top = argmax_of(mean);
  if (M >= 2) {
    std::size_t flips = 0;
    for (const auto& p : pass_probs)
      if (argmax_of(p) != top) ++flips;
    r.top1_flip_rate_mc = static_cast<double>(flips) / static_cast<double>(M);
    // mean over vocab of the across-pass variance of per-class probabilities
    double epi = 0.0;
    for (std::size_t j = 0; j < V; ++j) {
      double var = 0.0;
      for (const auto& p : pass_probs) {
        const double d = p[j] - mean[j];
        var += d * d;
      }
      epi += var / static_cast<double>(M);
    }
    r.epi = epi / static_cast<double>(V);
  }
  r.confidence = mean[top];
  if (target >= 0) {
    const double pt = mean[static_cast<std::size_t>(target)];
    r.nll = pt > 0.0 ? -std::log(pt) : std::numeric_limits<double>::infinity();
    r.correct = top == static_cast<std::size_t>(target);
  }
  return r;
}

double ece(const std::vector<double>& confidences, const std::vector<bool>& correct,
           std::size_t bins) {
  if (confidences.empty()) throw ContractViolation("ece: empty input");
  if (confidences.size() != correct.size()) throw ContractViolation("ece: length mismatch");
  if (bins < 1) throw ContractViolation("ece: bins must be >= 1");
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    std::size_t b = static_cast<std::size_t>(confidences[i] * static_cast<double>(bins));
    if (b >= bins) b = bins - 1;
    conf_sum[b] += confidences[i];
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
    ++count[b];
  }
  double e = 0.0;
  const double n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double cb = static_cast<double>(count[b]);
    e += (cb / n) * std::abs(acc_sum[b] / cb - conf_sum[b] / cb);
  }
  return e;
}

double cvar_nll(std::vector<double> nlls, double alpha) {
  if (nlls.empty()) throw ContractViolation("cvar_nll: empty input");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractViolation("cvar_nll: alpha must be in (0,1)");
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(alpha * static_cast<double>(nlls.size())));
  std::sort(nlls.begin(), nlls.end(), std::greater<double>());
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += nlls[i];
  return acc / static_cast<double>(k);
}

EvalResult canonical_eval(const Model& model, const std::vector<Example>& eval_set,
                          const BandConfig& band, std::size_t M, std::uint64_t seed,
                          std::size_t batch_size) {
  if (eval_set.empty()) throw ContractViolation("canonical_eval: empty eval set");
  const bool variational = model.config().variational;
  const std::size_t U = model.config().latent_dim;

  EvalResult out;
  std::vector<double> nlls;
  std::vector<double> confs;
  std::vector<bool> corrects;
  std::vector<double> unit_mu2_sum(U, 0.0);
  double kl_sum = 0.0, mse_sum = 0.0, mu2_sum = 0.0;
  std::size_t n = 0;

  for (std::size_t start = 0; start < eval_set.size(); start += batch_size) {
    const std::size_t end = std::min(eval_set.size(), start + batch_size);
    std::vector<TokenSeq> contexts;
    for (std::size_t i = start; i < end; ++i) contexts.push_back(eval_set[i].context);
    const std::size_t B = contexts.size();
    auto passes = model.mc_forward(contexts, M, Rng::mix(seed, start));

    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t V = passes[0].probs.cols();
      std::vector<std::vector<double>> pp(passes.size());
      for (std::size_t m = 0; m < passes.size(); ++m) {
        pp[m].assign(passes[m].probs.v.begin() + static_cast<std::ptrdiff_t>(b * V),
                     passes[m].probs.v.begin() + static_cast<std::ptrdiff_t>((b + 1) * V));
      }
      auto r = predictive_readout(pp, eval_set[start + b].target);
      nlls.push_back(r.nll);
      confs.push_back(r.confidence);
      corrects.push_back(r.correct);
      out.readouts.push_back(r);
      ++n;
    }

    if (variational) {
      // mu/sigma are noise-free; pass 0 carries them. local MSE averaged
      // over passes per the evaluation noise protocol.
      const auto& p0 = passes[0];
      for (std::size_t b = 0; b < B; ++b) {
        std::vector<double> mq(U), sq(U), mp(U), sp(U);
        double ex_mu2 = 0.0;
        for (std::size_t u = 0; u < U; ++u) {
          mq[u] = p0.mu_q.at(b, u);
          sq[u] = p0.sigma_q.at(b, u);
          mp[u] = p0.mu_p.at(b, u);
          sp[u] = p0.sigma_p.at(b, u);
          unit_mu2_sum[u] += mq[u] * mq[u];
          ex_mu2 += mq[u] * mq[u];
        }
        mu2_sum += ex_mu2 / static_cast<double>(U);
        kl_sum += kl_gaussian(mq, sq, mp, sp).sum;
      }
      const std::size_t Hd = model.config().hidden_dim;
      for (const auto& pass : passes) {
        for (std::size_t b = 0; b < B; ++b) {
          double acc = 0.0;
          for (std::size_t j = 0; j < Hd; ++j) {
            const double d = pass.h.at(b, j) - pass.h_hat.at(b, j);
            acc += d * d;
          }
          mse_sum += acc / static_cast<double>(Hd) / static_cast<double>(passes.size());
        }
      }
    } else {
      // deterministic analogue: mu^2 over the deterministic layer activations
      const auto& p0 = passes[0];
      for (std::size_t b = 0; b < B; ++b) {
        double acc = 0.0;
        for (std::size_t u = 0; u < U; ++u) acc += p0.det_act.at(b, u) * p0.det_act.at(b, u);
        mu2_sum += acc / static_cast<double>(U);
      }
    }
  }

  EvalSummary& s = out.summary;
  double ce_acc = 0.0, acc_acc = 0.0, mi_acc = 0.0, epi_acc = 0.0, flip_acc = 0.0;
  for (const auto& r : out.readouts) {
    ce_acc += r.nll;
    acc_acc += r.correct ? 1.0 : 0.0;
    mi_acc += r.mutual_information;
    epi_acc += r.epi;
    flip_acc += r.top1_flip_rate_mc;
  }
  const double dn = static_cast<double>(n);
  s.ce = ce_acc / dn;
  s.nll = s.ce;
  s.ppl = std::exp(s.ce);
  s.acc = acc_acc / dn;
  s.mean_mi = mi_acc / dn;
  s.mean_epi = epi_acc / dn;
  s.mean_flip = flip_acc / dn;
  s.ece = ece(confs, corrects);
  s.cvar_nll = cvar_nll(nlls);
  s.mu2_mean_eval = mu2_sum / dn;
  if (variational) {
    s.kl = kl_sum / dn;
    const double mse = mse_sum / dn;
    s.local = local_activity_proxy(mse);
    std::size_t n_low = 0, n_high = 0;
    s.unit_mu2.resize(U);
    for (std::size_t u = 0; u < U; ++u) {
      const double m2 = unit_mu2_sum[u] / dn;
      s.unit_mu2[u] = m2;
      if (m2 < band.band_low) ++n_low;
      if (m2 > band.band_high) ++n_high;
    }
    s.frac_low = static_cast<double>(n_low) / static_cast<double>(U);
    s.frac_too_high = static_cast<double>(n_high) / static_cast<double>(U);
    s.band_occupancy = 1.0 - s.frac_low - s.frac_too_high;
  } else {
    s.kl = 0.0;
    s.local = 0.0;
    s.frac_low = 0.0;
    s.frac_too_high = 0.0;
    s.band_occupancy = 0.0;
    s.mean_mi = 0.0;
    s.mean_epi = 0.0;
    s.mean_flip = 0.0;
  }
  return out;
}

LatentDiagnostics eval_latent_diagnostics(const EvalSummary& s) {
  LatentDiagnostics d;
  d.mu2_mean = s.mu2_mean_eval;
  d.occupancy = s.band_occupancy;
  d.frac_low = s.frac_low;
  d.frac_too_high = s.frac_too_high;
  d.kl = s.kl;
  d.local = s.local;
  return d;
}

void export_readouts_csv(const std::string& path, const std::vector<UncertaintyReadout>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("readout export: cannot open " + path);
  os << "id,H,Hc,MI,epi,flip,confidence,nll,correct\n";
  char buf[256];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n", i,
                  r.predictive_entropy, r.conditional_entropy, r.mutual_information, r.epi,
                  r.top1_flip_rate_mc, r.confidence, r.nll, r.correct ? 1 : 0);
    os << buf;
  }
}

}  // namespace eve

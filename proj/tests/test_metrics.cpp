#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "eve/error.hpp"
#include "eve/metrics.hpp"
#include "eve/rng.hpp"

using namespace eve;

namespace {

std::vector<std::vector<double>> random_passes(Rng& rng, std::size_t M, std::size_t V) {
  std::vector<std::vector<double>> pp(M, std::vector<double>(V));
  for (auto& p : pp) {
    double s = 0.0;
    for (double& x : p) {
      x = std::exp(rng.normal());
      s += x;
    }
    for (double& x : p) x /= s;
  }
  return pp;
}

}  // namespace

TEST_CASE("entropy decomposition: H = MI + Hc pre-floor, with bounds, on 1000 random sets") {
  Rng rng(71);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t M = 2 + rng.uniform_index(6), V = 2 + rng.uniform_index(10);
    const auto pp = random_passes(rng, M, V);
    const auto r = predictive_readout(pp, -1);
    CHECK(r.predictive_entropy >= -1e-12);
    CHECK(r.mutual_information >= 0.0);
    CHECK(r.mutual_information <= r.predictive_entropy + 1e-9);
    // pre-floor identity (the floor only clips negative jitter)
    CHECK(r.predictive_entropy - r.conditional_entropy <= r.mutual_information + 1e-9);
    CHECK(std::abs(std::max(0.0, r.predictive_entropy - r.conditional_entropy) -
                   r.mutual_information) < 1e-9);
    CHECK(r.top1_flip_rate_mc >= 0.0);
    CHECK(r.top1_flip_rate_mc <= 1.0);
    CHECK(r.epi >= 0.0);
    CHECK(r.confidence > 0.0);
    CHECK(r.confidence <= 1.0);
  }
}

TEST_CASE("hand-computed two-pass readout") {
  // pass 0 puts mass on class 0, pass 1 on class 1
  const std::vector<std::vector<double>> pp = {{0.9, 0.1}, {0.2, 0.8}};
  const auto r = predictive_readout(pp, 0);
  const std::vector<double> mean = {0.55, 0.45};
  const double H = -(0.55 * std::log(0.55) + 0.45 * std::log(0.45));
  const double h0 = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  const double h1 = -(0.2 * std::log(0.2) + 0.8 * std::log(0.8));
  CHECK(r.predictive_entropy == doctest::Approx(H).epsilon(1e-12));
  CHECK(r.conditional_entropy == doctest::Approx(0.5 * (h0 + h1)).epsilon(1e-12));
  CHECK(r.top1_flip_rate_mc == doctest::Approx(0.5));  // pass 1 argmax != mean argmax
  // across-pass variance per class: mean of squared deviations from the mean prob
  const double var0 = (0.35 * 0.35 + 0.35 * 0.35) / 2.0;
  CHECK(r.epi == doctest::Approx(var0).epsilon(1e-12));  // symmetric classes
  CHECK(r.confidence == doctest::Approx(0.55));
  CHECK(r.nll == doctest::Approx(-std::log(0.55)).epsilon(1e-12));
  CHECK(r.correct);
}

TEST_CASE("single-pass readout zeroes the disagreement statistics by convention") {
  const auto r = predictive_readout({{0.25, 0.75}}, 1);
  CHECK(r.mutual_information == 0.0);
  CHECK(r.top1_flip_rate_mc == 0.0);
  CHECK(r.epi == 0.0);
  CHECK(r.correct);
  CHECK_THROWS_AS((void)predictive_readout({}, -1), ContractViolation);
}

TEST_CASE("ECE: hand example over two bins") {
  // bin widths 0.5 with 2 bins; conf .2/.3 -> bin 0, .9 -> bin 1
  const std::vector<double> conf = {0.2, 0.3, 0.9};
  const std::vector<bool> corr = {true, false, true};
  // bin0: |acc .5 - conf .25| * 2/3, bin1: |1 - .9| * 1/3
  const double want = (2.0 / 3.0) * 0.25 + (1.0 / 3.0) * 0.1;
  CHECK(ece(conf, corr, 2) == doctest::Approx(want).epsilon(1e-12));
  // perfect calibration in a one-element bin
  CHECK(ece({1.0}, {true}, 15) == doctest::Approx(0.0));
  CHECK_THROWS_AS((void)ece({}, {}, 15), ContractViolation);
  CHECK_THROWS_AS((void)ece({0.5}, {true, false}, 15), ContractViolation);
}

TEST_CASE("CVaR-NLL: mean of the worst ceil(alpha*N) losses") {
  std::vector<double> nlls;
  for (int i = 1; i <= 100; ++i) nlls.push_back(static_cast<double>(i));
  // alpha=0.05 -> worst 5: 96..100
  CHECK(cvar_nll(nlls, 0.05) == doctest::Approx(98.0));
  // alpha=0.031 -> ceil(3.1)=4 -> 97..100
  CHECK(cvar_nll(nlls, 0.031) == doctest::Approx(98.5));
  CHECK(cvar_nll({7.0}, 0.05) == doctest::Approx(7.0));
  CHECK_THROWS_AS((void)cvar_nll({}, 0.05), ContractViolation);
  CHECK_THROWS_AS((void)cvar_nll({1.0}, 1.0), ContractViolation);
}

TEST_CASE("canonical eval: DET emits exact zeros for MI, Epi, Flip, KL, Local") {
  BackboneConfig bc;
  bc.context_len = 4;
  bc.embed_dim = 6;
  bc.hidden_dim = 8;
  bc.mlp_layers = 2;
  bc.latent_dim = 4;
  bc.mc_samples_eval = 5;
  bc.variational = false;
  const auto embed = std::make_shared<const EmbeddingTable>(EmbeddingTable::seeded(9, 6, 4));
  const Model det(bc, embed, 3);
  std::vector<Example> eval_set;
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    Example ex;
    for (int t = 0; t < 4; ++t) ex.context.push_back(static_cast<int>(rng.uniform_index(9)));
    ex.target = static_cast<int>(rng.uniform_index(9));
    eval_set.push_back(ex);
  }
  const auto res = canonical_eval(det, eval_set, BandConfig{}, 5, 42);
  CHECK(res.summary.mean_mi == 0.0);
  CHECK(res.summary.mean_epi == 0.0);
  CHECK(res.summary.mean_flip == 0.0);
  CHECK(res.summary.kl == 0.0);
  CHECK(res.summary.local == 0.0);
  CHECK(res.summary.frac_too_high == 0.0);
  CHECK(res.summary.mu2_mean_eval > 0.0);  // deterministic analogue stays live
  CHECK(res.summary.ppl == doctest::Approx(std::exp(res.summary.ce)).epsilon(1e-12));
  CHECK(res.readouts.size() == eval_set.size());

  // EVE on the same protocol: strictly positive disagreement
  BackboneConfig vc = bc;
  vc.variational = true;
  const Model eve_model(vc, embed, 3);
  const auto vres = canonical_eval(eve_model, eval_set, BandConfig{}, 5, 42);
  CHECK(vres.summary.mean_mi > 0.0);
  CHECK(vres.summary.mean_flip >= 0.0);
  CHECK(vres.summary.kl > 0.0);
  CHECK(vres.summary.local > 0.0);
  CHECK(vres.summary.unit_mu2.size() == vc.latent_dim);

  // same seed, same summary (fixed observation protocol)
  const auto vres2 = canonical_eval(eve_model, eval_set, BandConfig{}, 5, 42);
  CHECK(vres2.summary.ce == vres.summary.ce);
  CHECK(vres2.summary.mean_mi == vres.summary.mean_mi);
  const auto vres3 = canonical_eval(eve_model, eval_set, BandConfig{}, 5, 43);
  CHECK(vres3.summary.mean_mi != vres.summary.mean_mi);

  CHECK_THROWS_AS((void)canonical_eval(det, {}, BandConfig{}, 5, 42), ContractViolation);
}

TEST_CASE("readout CSV export is stable and parseable") {
  UncertaintyReadout r;
  r.predictive_entropy = 1.25;
  r.mutual_information = 0.5;
  r.confidence = 0.75;
  r.correct = true;
  const std::string path = "test_readouts.csv";
  export_readouts_csv(path, {r, r});
  std::ifstream is(path);
  std::string header, row;
  std::getline(is, header);
  CHECK(header == "id,H,Hc,MI,epi,flip,confidence,nll,correct");
  std::getline(is, row);
  CHECK(row == "0,1.25,0,0.5,0,0,0.75,0,1");
  std::remove(path.c_str());
}

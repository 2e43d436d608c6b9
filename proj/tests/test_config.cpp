#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "eve/config.hpp"
#include "eve/error.hpp"

using namespace eve;

TEST_CASE("defaults validate and survive a serialize/parse round trip") {
  RunConfig cfg;
  cfg.validate();
  const std::string text = serialize_config(cfg);
  const RunConfig back = parse_config_text(text);
  CHECK(serialize_config(back) == text);  // fixed point
  CHECK(back.train.seeds == cfg.train.seeds);
  CHECK(back.backbone.latent_dim == cfg.backbone.latent_dim);
  CHECK(back.band.lambda_band_high == cfg.band.lambda_band_high);
}

TEST_CASE("dotted keys set nested fields; context_len stays in sync") {
  const RunConfig cfg = parse_config_text(
      "corpus.vocab_size = 64\n"
      "corpus.num_pairs = 34\n"
      "data.context_len = 7\n"
      "backbone.latent_dim = 9\n"
      "band.lambda_band_high = 3.25\n"
      "regulator.beta_init = 0.5\n"
      "score.w_f = 0.15\n"
      "cost.abstain = 0.75\n"
      "train.seeds = 7,8,9\n"
      "train.lr = 1e-3\n"
      "agentic.num_examples = 50\n");
  CHECK(cfg.corpus.vocab_size == 64);
  CHECK(cfg.corpus.num_pairs == 34);
  CHECK(cfg.data.context_len == 7);
  CHECK(cfg.backbone.context_len == 7);  // mirrored into the backbone
  CHECK(cfg.backbone.latent_dim == 9);
  CHECK(cfg.band.lambda_band_high == 3.25);
  CHECK(cfg.regulator.beta_init == 0.5);
  CHECK(cfg.score.w_f == 0.15);
  CHECK(cfg.cost.cost_abstain == 0.75);
  CHECK(cfg.train.seeds == std::vector<std::int64_t>{7, 8, 9});
  CHECK(cfg.train.lr == 1e-3);
  CHECK(cfg.agentic_examples == 50);
}

TEST_CASE("comments and blank lines are ignored; malformed lines rejected") {
  const RunConfig cfg = parse_config_text("# a comment\n\ntrain.epochs = 5\n");
  CHECK(cfg.train.epochs == 5);
  CHECK_THROWS_AS((void)parse_config_text("train.epochs\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_text("no.such.key = 1\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_text("train.epochs = banana\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_file("no_such_config.cfg"), ConfigError);
}

TEST_CASE("config file parsing matches text parsing") {
  const std::string path = "test_config_roundtrip.cfg";
  {
    std::ofstream os(path);
    os << "corpus.vocab_size = 32\ntrain.batch_size = 16\n";
  }
  const RunConfig cfg = parse_config_file(path);
  CHECK(cfg.corpus.vocab_size == 32);
  CHECK(cfg.train.batch_size == 16);
  std::remove(path.c_str());
}

TEST_CASE("EVE_SEED environment variable overrides the seed list") {
  setenv("EVE_SEED", "4242", 1);
  const RunConfig cfg = parse_config_text("train.seeds = 1,2,3\n");
  CHECK(cfg.train.seeds == std::vector<std::int64_t>{4242});
  unsetenv("EVE_SEED");
  const RunConfig plain = parse_config_text("train.seeds = 1,2,3\n");
  CHECK(plain.train.seeds == std::vector<std::int64_t>{1, 2, 3});
}

TEST_CASE("sweep spec accepts only lambda_band_high") {
  const SweepSpec s = parse_sweep("lambda_band_high=1.0,2.05,3.0");
  CHECK(s.key == "lambda_band_high");
  CHECK(s.values == std::vector<double>{1.0, 2.05, 3.0});
  CHECK_THROWS_AS((void)parse_sweep("lambda_local=0.1"), ConfigError);
  CHECK_THROWS_AS((void)parse_sweep("lambda_band_high"), ConfigError);
  CHECK_THROWS_AS((void)parse_sweep("lambda_band_high="), ConfigError);
}

TEST_CASE("validation rejects out-of-range values") {
  TrainConfig t;
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.seeds.clear();
  CHECK_THROWS_AS(t.validate(), ConfigError);

  RunConfig r;
  r.corpus.vocab_size = 1;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r = RunConfig{};
  r.agentic_examples = 0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r = RunConfig{};
  r.backbone.latent_dim = 0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

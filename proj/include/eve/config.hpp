#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eve/agentic.hpp"
#include "eve/controller.hpp"
#include "eve/data.hpp"
#include "eve/model.hpp"
#include "eve/objective.hpp"
#include "eve/retention.hpp"

namespace eve {

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 48;
  double lr = 2e-4;
  double weight_decay = 1e-4;
  double clip_grad = 1.0;
  std::vector<std::int64_t> seeds = {101, 202};

  void validate() const;
};

struct RunConfig {
  CorpusConfig corpus;
  std::string corpus_import_path;     // optional pre-tokenized corpus
  std::string embedding_import_path;  // optional external embedding matrix
  std::uint64_t embedding_seed = 11;
  DataConfig data;
  BackboneConfig backbone;
  BandConfig band;
  RegulatorConfig regulator;
  ScoreConfig score;
  FullCalibConfig calibration;
  CostConfig cost;
  RetentionConfig retention;
  VerifyConfig verify_cfg;
  TrainConfig train;
  std::size_t agentic_examples = 200;
  std::size_t calib_sim_examples = 60;
  std::size_t retrieval_index_size = 500;

  void validate() const;
};

// Flat key=value file with dotted section names; unknown keys rejected.
// EVE_SEED in the environment overrides the training seed list.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text);
std::string serialize_config(const RunConfig& cfg);

// --sweep KEY=V1,V2,... (only lambda_band_high is currently sweepable)
struct SweepSpec {
  std::string key;
  std::vector<double> values;
};
SweepSpec parse_sweep(const std::string& spec);

}  // namespace eve

#include "eve/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "eve/error.hpp"

namespace eve {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(clip_grad > 0.0)) throw ConfigError("train.clip_grad must be positive");
  if (seeds.empty()) throw ConfigError("train.seeds must be non-empty");
}

void RunConfig::validate() const {
  data.validate();
  backbone.validate();
  band.validate();
  score.validate();
  cost.validate();
  retention.validate();
  train.validate();
  if (corpus.vocab_size < 2) throw ConfigError("corpus.vocab_size must be >= 2");
  if (agentic_examples < 1) throw ConfigError("agentic.num_examples must be >= 1");
}

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

std::string list_str(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string seeds_str(const std::vector<std::int64_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"corpus.vocab_size", [](RunConfig& c, const std::string& v) { c.corpus.vocab_size = std::stoul(v); }},
      {"corpus.num_pairs", [](RunConfig& c, const std::string& v) { c.corpus.num_pairs = std::stoul(v); }},
      {"corpus.seed", [](RunConfig& c, const std::string& v) { c.corpus.seed = std::stoull(v); }},
      {"corpus.ambiguous_frac", [](RunConfig& c, const std::string& v) { c.corpus.ambiguous_frac = std::stod(v); }},
      {"corpus.import_path", [](RunConfig& c, const std::string& v) { c.corpus_import_path = v; }},
      {"embedding.import_path", [](RunConfig& c, const std::string& v) { c.embedding_import_path = v; }},
      {"embedding.seed", [](RunConfig& c, const std::string& v) { c.embedding_seed = std::stoull(v); }},
      {"data.dataset_fraction", [](RunConfig& c, const std::string& v) { c.data.dataset_fraction = std::stod(v); }},
      {"data.val_frac", [](RunConfig& c, const std::string& v) { c.data.val_frac = std::stod(v); }},
      {"data.max_prompt_tokens", [](RunConfig& c, const std::string& v) { c.data.max_prompt_tokens = std::stoul(v); }},
      {"data.max_story_tokens", [](RunConfig& c, const std::string& v) { c.data.max_story_tokens = std::stoul(v); }},
      {"data.context_len", [](RunConfig& c, const std::string& v) { c.data.context_len = c.backbone.context_len = std::stoul(v); }},
      {"data.target_stride", [](RunConfig& c, const std::string& v) { c.data.target_stride = std::stoul(v); }},
      {"data.min_story_tokens", [](RunConfig& c, const std::string& v) { c.data.min_story_tokens = std::stoul(v); }},
      {"data.seed", [](RunConfig& c, const std::string& v) { c.data.seed = std::stoull(v); }},
      {"backbone.embed_dim", [](RunConfig& c, const std::string& v) { c.backbone.embed_dim = std::stoul(v); }},
      {"backbone.hidden_dim", [](RunConfig& c, const std::string& v) { c.backbone.hidden_dim = std::stoul(v); }},
      {"backbone.mlp_layers", [](RunConfig& c, const std::string& v) { c.backbone.mlp_layers = std::stoul(v); }},
      {"backbone.latent_dim", [](RunConfig& c, const std::string& v) { c.backbone.latent_dim = std::stoul(v); }},
      {"backbone.mc_samples_train", [](RunConfig& c, const std::string& v) { c.backbone.mc_samples_train = std::stoul(v); }},
      {"backbone.mc_samples_eval", [](RunConfig& c, const std::string& v) { c.backbone.mc_samples_eval = std::stoul(v); }},
      {"band.mu2_target", [](RunConfig& c, const std::string& v) { c.band.mu2_target = std::stod(v); }},
      {"band.band_low", [](RunConfig& c, const std::string& v) { c.band.band_low = std::stod(v); }},
      {"band.band_high", [](RunConfig& c, const std::string& v) { c.band.band_high = std::stod(v); }},
      {"band.lambda_band", [](RunConfig& c, const std::string& v) { c.band.lambda_band = std::stod(v); }},
      {"band.lambda_band_high", [](RunConfig& c, const std::string& v) { c.band.lambda_band_high = std::stod(v); }},
      {"band.lambda_local", [](RunConfig& c, const std::string& v) { c.band.lambda_local = std::stod(v); }},
      {"regulator.beta_init", [](RunConfig& c, const std::string& v) { c.regulator.beta_init = std::stod(v); }},
      {"regulator.beta_min", [](RunConfig& c, const std::string& v) { c.regulator.beta_min = std::stod(v); }},
      {"regulator.beta_max", [](RunConfig& c, const std::string& v) { c.regulator.beta_max = std::stod(v); }},
      {"regulator.kl_per_unit_low", [](RunConfig& c, const std::string& v) { c.regulator.kl_per_unit_low = std::stod(v); }},
      {"regulator.kl_per_unit_high", [](RunConfig& c, const std::string& v) { c.regulator.kl_per_unit_high = std::stod(v); }},
      {"regulator.thermostat_step", [](RunConfig& c, const std::string& v) { c.regulator.thermostat_step = std::stod(v); }},
      {"regulator.scale_min", [](RunConfig& c, const std::string& v) { c.regulator.scale_min = std::stod(v); }},
      {"regulator.scale_max", [](RunConfig& c, const std::string& v) { c.regulator.scale_max = std::stod(v); }},
      {"regulator.ema", [](RunConfig& c, const std::string& v) { c.regulator.ema = std::stod(v); }},
      {"score.uq_norm_entropy", [](RunConfig& c, const std::string& v) { c.score.uq_norm_entropy = std::stod(v); }},
      {"score.uq_norm_mi", [](RunConfig& c, const std::string& v) { c.score.uq_norm_mi = std::stod(v); }},
      {"score.uq_norm_flip", [](RunConfig& c, const std::string& v) { c.score.uq_norm_flip = std::stod(v); }},
      {"score.w_e", [](RunConfig& c, const std::string& v) { c.score.w_e = std::stod(v); }},
      {"score.w_m", [](RunConfig& c, const std::string& v) { c.score.w_m = std::stod(v); }},
      {"score.w_f", [](RunConfig& c, const std::string& v) { c.score.w_f = std::stod(v); }},
      {"score.agent_answer_min_conf", [](RunConfig& c, const std::string& v) { c.score.agent_answer_min_conf = std::stod(v); }},
      {"score.penalty", [](RunConfig& c, const std::string& v) { c.score.penalty = std::stod(v); }},
      {"calibration.kappa_cov", [](RunConfig& c, const std::string& v) { c.calibration.kappa_cov = std::stod(v); }},
      {"calibration.kappa_abs", [](RunConfig& c, const std::string& v) { c.calibration.kappa_abs = std::stod(v); }},
      {"calibration.kappa_ret", [](RunConfig& c, const std::string& v) { c.calibration.kappa_ret = std::stod(v); }},
      {"calibration.abstain_cap", [](RunConfig& c, const std::string& v) { c.calibration.abstain_cap = std::stod(v); }},
      {"calibration.retrieve_cap", [](RunConfig& c, const std::string& v) { c.calibration.retrieve_cap = std::stod(v); }},
      {"calibration.grid_green", [](RunConfig& c, const std::string& v) { c.calibration.grid_green = parse_list(v); }},
      {"calibration.grid_orange", [](RunConfig& c, const std::string& v) { c.calibration.grid_orange = parse_list(v); }},
      {"calibration.grid_red", [](RunConfig& c, const std::string& v) { c.calibration.grid_red = parse_list(v); }},
      {"calibration.sim_examples", [](RunConfig& c, const std::string& v) { c.calib_sim_examples = std::stoul(v); }},
      {"cost.answer", [](RunConfig& c, const std::string& v) { c.cost.cost_answer = std::stod(v); }},
      {"cost.resample", [](RunConfig& c, const std::string& v) { c.cost.cost_resample = std::stod(v); }},
      {"cost.retrieve_resample", [](RunConfig& c, const std::string& v) { c.cost.cost_retrieve_resample = std::stod(v); }},
      {"cost.abstain", [](RunConfig& c, const std::string& v) { c.cost.cost_abstain = std::stod(v); }},
      {"cost.weight", [](RunConfig& c, const std::string& v) { c.cost.cost_weight = std::stod(v); }},
      {"retention.selection_ce_tolerance", [](RunConfig& c, const std::string& v) { c.retention.selection_ce_tolerance = std::stod(v); }},
      {"retention.selection_local_ratio", [](RunConfig& c, const std::string& v) { c.retention.selection_local_ratio = std::stod(v); }},
      {"retention.mu2_target", [](RunConfig& c, const std::string& v) { c.retention.mu2_target = std::stod(v); }},
      {"verify.min_coverage", [](RunConfig& c, const std::string& v) { c.verify_cfg.min_coverage = std::stod(v); }},
      {"verify.max_abstain", [](RunConfig& c, const std::string& v) { c.verify_cfg.max_abstain = std::stod(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = std::stoul(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = std::stoul(v); }},
      {"train.lr", [](RunConfig& c, const std::string& v) { c.train.lr = std::stod(v); }},
      {"train.weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = std::stod(v); }},
      {"train.clip_grad", [](RunConfig& c, const std::string& v) { c.train.clip_grad = std::stod(v); }},
      {"train.seeds",
       [](RunConfig& c, const std::string& v) {
         c.train.seeds.clear();
         std::istringstream is(v);
         std::string tok;
         while (std::getline(is, tok, ',')) c.train.seeds.push_back(std::stoll(tok));
       }},
      {"agentic.num_examples", [](RunConfig& c, const std::string& v) { c.agentic_examples = std::stoul(v); }},
      {"agentic.retrieval_index_size", [](RunConfig& c, const std::string& v) { c.retrieval_index_size = std::stoul(v); }},
  };
  return table;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    auto ltrim = line.find_first_not_of(" \t\r");
    if (ltrim == std::string::npos) continue;
    auto rtrim = line.find_last_not_of(" \t\r");
    line = line.substr(ltrim, rtrim - ltrim + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    auto strip = [](std::string s) {
      auto a = s.find_first_not_of(" \t");
      auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = strip(line.substr(0, eq)), val = strip(line.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config: unknown key '" + key + "'");
    try {
      it->second(cfg, val);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
  }
  // keep data/backbone context_len in sync
  cfg.backbone.context_len = cfg.data.context_len;
  if (const char* env = std::getenv("EVE_SEED")) {
    cfg.train.seeds = {std::stoll(env)};
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "corpus.vocab_size = " << c.corpus.vocab_size << "\n"
     << "corpus.num_pairs = " << c.corpus.num_pairs << "\n"
     << "corpus.seed = " << c.corpus.seed << "\n"
     << "corpus.ambiguous_frac = " << c.corpus.ambiguous_frac << "\n";
  if (!c.corpus_import_path.empty()) os << "corpus.import_path = " << c.corpus_import_path << "\n";
  if (!c.embedding_import_path.empty())
    os << "embedding.import_path = " << c.embedding_import_path << "\n";
  os << "embedding.seed = " << c.embedding_seed << "\n"
     << "data.dataset_fraction = " << c.data.dataset_fraction << "\n"
     << "data.val_frac = " << c.data.val_frac << "\n"
     << "data.max_prompt_tokens = " << c.data.max_prompt_tokens << "\n"
     << "data.max_story_tokens = " << c.data.max_story_tokens << "\n"
     << "data.context_len = " << c.data.context_len << "\n"
     << "data.target_stride = " << c.data.target_stride << "\n"
     << "data.min_story_tokens = " << c.data.min_story_tokens << "\n"
     << "data.seed = " << c.data.seed << "\n"
     << "backbone.embed_dim = " << c.backbone.embed_dim << "\n"
     << "backbone.hidden_dim = " << c.backbone.hidden_dim << "\n"
     << "backbone.mlp_layers = " << c.backbone.mlp_layers << "\n"
     << "backbone.latent_dim = " << c.backbone.latent_dim << "\n"
     << "backbone.mc_samples_train = " << c.backbone.mc_samples_train << "\n"
     << "backbone.mc_samples_eval = " << c.backbone.mc_samples_eval << "\n"
     << "band.mu2_target = " << c.band.mu2_target << "\n"
     << "band.band_low = " << c.band.band_low << "\n"
     << "band.band_high = " << c.band.band_high << "\n"
     << "band.lambda_band = " << c.band.lambda_band << "\n"
     << "band.lambda_band_high = " << c.band.lambda_band_high << "\n"
     << "band.lambda_local = " << c.band.lambda_local << "\n"
     << "regulator.beta_init = " << c.regulator.beta_init << "\n"
     << "regulator.beta_min = " << c.regulator.beta_min << "\n"
     << "regulator.beta_max = " << c.regulator.beta_max << "\n"
     << "regulator.kl_per_unit_low = " << c.regulator.kl_per_unit_low << "\n"
     << "regulator.kl_per_unit_high = " << c.regulator.kl_per_unit_high << "\n"
     << "regulator.thermostat_step = " << c.regulator.thermostat_step << "\n"
     << "regulator.scale_min = " << c.regulator.scale_min << "\n"
     << "regulator.scale_max = " << c.regulator.scale_max << "\n"
     << "regulator.ema = " << c.regulator.ema << "\n"
     << "score.uq_norm_entropy = " << c.score.uq_norm_entropy << "\n"
     << "score.uq_norm_mi = " << c.score.uq_norm_mi << "\n"
     << "score.uq_norm_flip = " << c.score.uq_norm_flip << "\n"
     << "score.w_e = " << c.score.w_e << "\n"
     << "score.w_m = " << c.score.w_m << "\n"
     << "score.w_f = " << c.score.w_f << "\n"
     << "score.agent_answer_min_conf = " << c.score.agent_answer_min_conf << "\n"
     << "score.penalty = " << c.score.penalty << "\n"
     << "calibration.kappa_cov = " << c.calibration.kappa_cov << "\n"
     << "calibration.kappa_abs = " << c.calibration.kappa_abs << "\n"
     << "calibration.kappa_ret = " << c.calibration.kappa_ret << "\n"
     << "calibration.abstain_cap = " << c.calibration.abstain_cap << "\n"
     << "calibration.retrieve_cap = " << c.calibration.retrieve_cap << "\n"
     << "calibration.grid_green = " << list_str(c.calibration.grid_green) << "\n"
     << "calibration.grid_orange = " << list_str(c.calibration.grid_orange) << "\n"
     << "calibration.grid_red = " << list_str(c.calibration.grid_red) << "\n"
     << "calibration.sim_examples = " << c.calib_sim_examples << "\n"
     << "cost.answer = " << c.cost.cost_answer << "\n"
     << "cost.resample = " << c.cost.cost_resample << "\n"
     << "cost.retrieve_resample = " << c.cost.cost_retrieve_resample << "\n"
     << "cost.abstain = " << c.cost.cost_abstain << "\n"
     << "cost.weight = " << c.cost.cost_weight << "\n"
     << "retention.selection_ce_tolerance = " << c.retention.selection_ce_tolerance << "\n"
     << "retention.selection_local_ratio = " << c.retention.selection_local_ratio << "\n"
     << "retention.mu2_target = " << c.retention.mu2_target << "\n"
     << "verify.min_coverage = " << c.verify_cfg.min_coverage << "\n"
     << "verify.max_abstain = " << c.verify_cfg.max_abstain << "\n"
     << "train.epochs = " << c.train.epochs << "\n"
     << "train.batch_size = " << c.train.batch_size << "\n"
     << "train.lr = " << c.train.lr << "\n"
     << "train.weight_decay = " << c.train.weight_decay << "\n"
     << "train.clip_grad = " << c.train.clip_grad << "\n"
     << "train.seeds = " << seeds_str(c.train.seeds) << "\n"
     << "agentic.num_examples = " << c.agentic_examples << "\n"
     << "agentic.retrieval_index_size = " << c.retrieval_index_size << "\n";
  return os.str();
}

SweepSpec parse_sweep(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("sweep: expected KEY=V1,V2,...");
  SweepSpec s;
  s.key = spec.substr(0, eq);
  s.values = parse_list(spec.substr(eq + 1));
  if (s.key != "lambda_band_high") throw ConfigError("sweep: unsupported key '" + s.key + "'");
  if (s.values.empty()) throw ConfigError("sweep: empty value list");
  return s;
}

}  // namespace eve

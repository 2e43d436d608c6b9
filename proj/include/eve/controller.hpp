#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "eve/metrics.hpp"
#include "eve/model.hpp"

namespace eve {

struct ScoreConfig {
  double uq_norm_entropy = 3.5;
  double uq_norm_mi = 0.50;
  double uq_norm_flip = 0.35;
  double w_e = 0.40;
  double w_m = 0.40;
  double w_f = 0.20;
  double agent_answer_min_conf = 0.20;
  double penalty = 0.10;

  void validate() const;
};

struct Thresholds {
  double uq_green = 0.0;
  double uq_orange = 0.0;
  double uq_red = 0.0;

  void validate() const;
};

enum class Action { Answer, DeliberateMore, RetrieveOrResample, AbstainOrEscalate };
enum class Category { Direct, Deliberate, Retrieve, Abstain };

Category category_of(Action a);
const char* action_name(Action a);
const char* category_name(Category c);

// Capped weighted mean of normalized entropy / MI / flip, plus the
// low-confidence penalty step; U in [0, 1].
double uncertainty_score(const UncertaintyReadout& readout, const ScoreConfig& cfg);

// Lower-interpolation empirical quantile: sorted sample, index ceil(q*N)-1.
double quantile_lower(std::vector<double> sample, double q);

Thresholds calibrate_basic(const std::vector<double>& scores,
                           std::array<double, 3> quantiles = {0.50, 0.75, 0.90});

struct PolicyOutcome {
  double utility = 0.0;
  double coverage = 0.0;
  double abstain_rate = 0.0;
  double retrieve_rate = 0.0;
  double mean_cost = 0.0;
};

struct FullCalibConfig {
  double kappa_cov = 0.1;
  double kappa_abs = 1.0;
  double kappa_ret = 1.0;
  double abstain_cap = 0.2;
  double retrieve_cap = 0.5;
  std::vector<double> grid_green = {0.40, 0.50, 0.60};
  std::vector<double> grid_orange = {0.70, 0.75, 0.80};
  std::vector<double> grid_red = {0.85, 0.90, 0.95};
};

double calibration_objective(const PolicyOutcome& o, const FullCalibConfig& cfg);

// Scores every quantile triplet of the grid through the policy callback and
// returns the argmax of the penalized proxy objective; ties break toward
// higher coverage, then lower mean cost.
Thresholds calibrate_full(const std::vector<double>& scores, const FullCalibConfig& cfg,
                          const std::function<PolicyOutcome(const Thresholds&)>& evaluate);

// Half-open routing intervals exactly as written:
// [0,g) answer, [g,o) deliberate, [o,r) retrieve, [r,..] abstain.
Action route(double score, const Thresholds& t);

struct CostConfig {
  double cost_answer = 1.0;
  double cost_resample = 2.0;
  double cost_retrieve_resample = 3.0;
  double cost_abstain = 0.5;
  double cost_weight = 0.02;

  void validate() const;
};

// Top-1 cosine retrieval over mean-pooled frozen embeddings of stored
// corpus windows.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  RetrievalIndex(const EmbeddingTable& table, std::vector<TokenSeq> contexts);

  bool empty() const { return contexts_.empty(); }
  std::size_t size() const { return contexts_.size(); }
  std::optional<std::size_t> nearest(const TokenSeq& query) const;
  const TokenSeq& context(std::size_t i) const { return contexts_[i]; }

  static std::vector<double> pooled_embedding(const EmbeddingTable& table, const TokenSeq& ctx);

 private:
  std::vector<TokenSeq> contexts_;
  std::vector<std::vector<double>> pooled_;
  const EmbeddingTable* table_ = nullptr;
};

struct ActionPlan {
  Action action = Action::Answer;
  Category category = Category::Direct;
  int steps = 0;
  double cost = 0.0;
  double mc_cost = 0.0;
  bool retrieve_support = false;
  bool deliberate_support = false;
  bool resample_support = false;
  bool degraded_retrieval = false;  // empty index fallback
  std::optional<std::vector<double>> terminal;  // absent iff abstained
};

ActionPlan execute(Action action, const Model& model, const TokenSeq& context,
                   const RetrievalIndex* index, const CostConfig& costs, std::size_t mc_samples,
                   std::uint64_t seed);

// Argmax of the terminal distribution, lowest token id on ties; nullopt on
// abstention.
std::optional<int> final_decision(const ActionPlan& plan);

struct EpisodeTrace {
  std::size_t example_id = 0;
  double score = 0.0;
  Action action = Action::Answer;
  Category category = Category::Direct;
  int steps = 0;
  double cost = 0.0;
  double mc_cost = 0.0;
  bool retrieve_support = false;
  bool deliberate_support = false;
  bool resample_support = false;
  bool abstained = false;
  bool correct = false;
  double ce = 0.0;  // non-finite when abstained
  int decision = -1;
};

EpisodeTrace run_episode(const Model& model, const RetrievalIndex* index, const Example& ex,
                         std::size_t example_id, const ScoreConfig& score_cfg,
                         const Thresholds& thresholds, const CostConfig& costs,
                         std::uint64_t seed);

// Structured-text sidecar persisted beside the checkpoint.
void save_thresholds(const std::string& path, const Thresholds& t, const ScoreConfig& s);
void load_thresholds(const std::string& path, Thresholds& t, ScoreConfig& s);

}  // namespace eve

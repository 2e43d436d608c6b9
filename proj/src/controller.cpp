#include "eve/controller.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "eve/error.hpp"

namespace eve {

void ScoreConfig::validate() const {
  if (!(w_e + w_m + w_f > 0.0)) throw ContractViolation("score: weights sum to zero");
  if (!(uq_norm_entropy > 0.0 && uq_norm_mi > 0.0 && uq_norm_flip > 0.0))
    throw ConfigError("score: normalization caps must be positive");
}

void Thresholds::validate() const {
  if (!(uq_green <= uq_orange && uq_orange <= uq_red))
    throw ContractViolation("thresholds: require green <= orange <= red");
}

void CostConfig::validate() const {
  if (cost_answer < 0 || cost_resample < 0 || cost_retrieve_resample < 0 || cost_abstain < 0 ||
      cost_weight < 0)
    throw ConfigError("costs: all entries must be >= 0");
}

Category category_of(Action a) {
  switch (a) {
    case Action::Answer: return Category::Direct;
    case Action::DeliberateMore: return Category::Deliberate;
    case Action::RetrieveOrResample: return Category::Retrieve;
    case Action::AbstainOrEscalate: return Category::Abstain;
  }
  return Category::Direct;
}

const char* action_name(Action a) {
  switch (a) {
    case Action::Answer: return "answer";
    case Action::DeliberateMore: return "deliberate_more";
    case Action::RetrieveOrResample: return "retrieve_or_resample";
    case Action::AbstainOrEscalate: return "abstain_or_escalate";
  }
  return "?";
}

const char* category_name(Category c) {
  switch (c) {
    case Category::Direct: return "direct";
    case Category::Deliberate: return "deliberate";
    case Category::Retrieve: return "retrieve";
    case Category::Abstain: return "abstain";
  }
  return "?";
}

namespace {
double clip01(double x) { return std::min(1.0, std::max(0.0, x)); }
}  // namespace

double uncertainty_score(const UncertaintyReadout& r, const ScoreConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(r.predictive_entropy) || !std::isfinite(r.mutual_information) ||
      !std::isfinite(r.top1_flip_rate_mc) || !std::isfinite(r.confidence))
    throw ContractViolation("uncertainty_score: readout must be finite");
  const double e = clip01(r.predictive_entropy / cfg.uq_norm_entropy);
  const double m = clip01(r.mutual_information / cfg.uq_norm_mi);
  const double f = clip01(r.top1_flip_rate_mc / cfg.uq_norm_flip);
  double u = (cfg.w_e * e + cfg.w_m * m + cfg.w_f * f) / (cfg.w_e + cfg.w_m + cfg.w_f);
  if (r.confidence < cfg.agent_answer_min_conf) u = std::min(1.0, u + cfg.penalty);
  return u;
}

double quantile_lower(std::vector<double> sample, double q) {
  if (sample.empty()) throw ContractViolation("quantile: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  std::size_t idx = static_cast<std::size_t>(std::ceil(q * n));
  if (idx > 0) --idx;
  if (idx >= sample.size()) idx = sample.size() - 1;
  return sample[idx];
}

Thresholds calibrate_basic(const std::vector<double>& scores, std::array<double, 3> quantiles) {
  if (scores.empty()) throw ContractViolation("calibrate_basic: empty calibration set");
  Thresholds t;
  t.uq_green = quantile_lower(scores, quantiles[0]);
  t.uq_orange = quantile_lower(scores, quantiles[1]);
  t.uq_red = quantile_lower(scores, quantiles[2]);
  t.validate();
  return t;
}

double calibration_objective(const PolicyOutcome& o, const FullCalibConfig& cfg) {
  return o.utility + cfg.kappa_cov * o.coverage -
         cfg.kappa_abs * std::max(0.0, o.abstain_rate - cfg.abstain_cap) -
         cfg.kappa_ret * std::max(0.0, o.retrieve_rate - cfg.retrieve_cap);
}

Thresholds calibrate_full(const std::vector<double>& scores, const FullCalibConfig& cfg,
                          const std::function<PolicyOutcome(const Thresholds&)>& evaluate) {
  if (cfg.grid_green.empty() || cfg.grid_orange.empty() || cfg.grid_red.empty())
    throw ContractViolation("calibrate_full: empty quantile grid");
  bool have_best = false;
  Thresholds best_t;
  double best_j = 0.0;
  PolicyOutcome best_o;
  for (double qg : cfg.grid_green)
    for (double qo : cfg.grid_orange)
      for (double qr : cfg.grid_red) {
        if (!(qg < qo && qo < qr)) continue;
        Thresholds t = calibrate_basic(scores, {qg, qo, qr});
        const PolicyOutcome o = evaluate(t);
        const double j = calibration_objective(o, cfg);
        const bool better =
            !have_best || j > best_j ||
            (j == best_j && (o.coverage > best_o.coverage ||
                             (o.coverage == best_o.coverage && o.mean_cost < best_o.mean_cost)));
        if (better) {
          have_best = true;
          best_t = t;
          best_j = j;
          best_o = o;
        }
      }
  if (!have_best) throw ContractViolation("calibrate_full: no valid triplet in grid");
  return best_t;
}

Action route(double score, const Thresholds& t) {
  t.validate();
  if (score < t.uq_green) return Action::Answer;
  if (score < t.uq_orange) return Action::DeliberateMore;
  if (score < t.uq_red) return Action::RetrieveOrResample;
  return Action::AbstainOrEscalate;
}

RetrievalIndex::RetrievalIndex(const EmbeddingTable& table, std::vector<TokenSeq> contexts)
    : contexts_(std::move(contexts)), table_(&table) {
  pooled_.reserve(contexts_.size());
  for (const auto& c : contexts_) pooled_.push_back(pooled_embedding(table, c));
}

std::vector<double> RetrievalIndex::pooled_embedding(const EmbeddingTable& table,
                                                     const TokenSeq& ctx) {
  std::vector<double> acc(table.embed_dim(), 0.0);
  for (int t : ctx) {
    auto row = table.lookup(t);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += row[j];
  }
  if (!ctx.empty())
    for (double& x : acc) x /= static_cast<double>(ctx.size());
  return acc;
}

std::optional<std::size_t> RetrievalIndex::nearest(const TokenSeq& query) const {
  if (contexts_.empty()) return std::nullopt;
  const auto q = pooled_embedding(*table_, query);
  double qn = 0.0;
  for (double x : q) qn += x * x;
  qn = std::sqrt(qn);
  std::size_t best = 0;
  double best_cos = -2.0;
  for (std::size_t i = 0; i < pooled_.size(); ++i) {
    double dot = 0.0, n = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      dot += q[j] * pooled_[i][j];
      n += pooled_[i][j] * pooled_[i][j];
    }
    const double denom = qn * std::sqrt(n);
    const double c = denom > 0.0 ? dot / denom : 0.0;
    if (c > best_cos) {
      best_cos = c;
      best = i;
    }
  }
  return best;
}

namespace {

std::vector<double> mean_row(const Tensor& probs) {
  // single-row predictive mean to a flat vector
  return std::vector<double>(probs.v.begin(), probs.v.end());
}

std::vector<double> mc_mean(const Model& model, const TokenSeq& ctx, std::size_t M,
                            std::uint64_t seed) {
  auto passes = model.mc_forward({ctx}, M, seed);
  return mean_row(Model::predictive_mean(passes));
}

std::vector<double> blend(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.5 * (a[i] + b[i]);
  return out;
}

}  // namespace

ActionPlan execute(Action action, const Model& model, const TokenSeq& context,
                   const RetrievalIndex* index, const CostConfig& costs, std::size_t mc_samples,
                   std::uint64_t seed) {
  costs.validate();
  const std::size_t M = mc_samples;
  ActionPlan plan;
  plan.action = action;
  plan.category = category_of(action);
  switch (action) {
    case Action::Answer: {
      plan.terminal = mc_mean(model, context, M, seed);
      plan.steps = 1;
      plan.cost = costs.cost_answer;
      plan.mc_cost = static_cast<double>(M);
      break;
    }
    case Action::DeliberateMore: {
      // doubled MC budget, old and new passes merged
      const auto base = mc_mean(model, context, M, seed);
      const auto extra = mc_mean(model, context, M, Rng::mix(seed, 1));
      plan.terminal = blend(base, extra);
      plan.steps = 2;
      plan.cost = costs.cost_resample;
      plan.mc_cost = static_cast<double>(2 * M);
      plan.deliberate_support = true;
      plan.resample_support = true;
      break;
    }
    case Action::RetrieveOrResample: {
      const auto neighbor = (index && !index->empty()) ? index->nearest(context) : std::nullopt;
      if (!neighbor) {
        // no usable index: resample-only fallback, recorded as degraded
        const auto base = mc_mean(model, context, M, seed);
        const auto extra = mc_mean(model, context, M, Rng::mix(seed, 3));
        plan.terminal = blend(base, extra);
        plan.steps = 2;
        plan.cost = costs.cost_resample;
        plan.mc_cost = static_cast<double>(2 * M);
        plan.resample_support = true;
        plan.degraded_retrieval = true;
        break;
      }
      // splice the neighbor's tail ahead of the query's tail, keeping
      // context_len tokens total
      const TokenSeq& ctx_n = index->context(*neighbor);
      const std::size_t L = context.size();
      const std::size_t k = L / 2;
      TokenSeq augmented;
      augmented.insert(augmented.end(), ctx_n.end() - static_cast<std::ptrdiff_t>(k), ctx_n.end());
      augmented.insert(augmented.end(), context.end() - static_cast<std::ptrdiff_t>(L - k),
                       context.end());
      const auto aug = mc_mean(model, augmented, M, Rng::mix(seed, 2));
      const auto resampled = mc_mean(model, context, M, Rng::mix(seed, 3));
      plan.terminal = blend(aug, resampled);
      plan.steps = 3;
      plan.cost = costs.cost_retrieve_resample;
      plan.mc_cost = static_cast<double>(3 * M);
      plan.retrieve_support = true;
      plan.resample_support = true;
      break;
    }
    case Action::AbstainOrEscalate: {
      plan.steps = 1;
      plan.cost = costs.cost_abstain;
      plan.mc_cost = static_cast<double>(M);  // scoring passes already spent
      break;
    }
  }
  return plan;
}

std::optional<int> final_decision(const ActionPlan& plan) {
  if (!plan.terminal) return std::nullopt;
  const auto& p = *plan.terminal;
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;  // ties -> lowest token id
  return static_cast<int>(best);
}

EpisodeTrace run_episode(const Model& model, const RetrievalIndex* index, const Example& ex,
                         std::size_t example_id, const ScoreConfig& score_cfg,
                         const Thresholds& thresholds, const CostConfig& costs,
                         std::uint64_t seed) {
  const std::size_t M = model.config().mc_samples_eval;
  auto passes = model.mc_forward({ex.context}, M, seed);
  std::vector<std::vector<double>> pp;
  for (const auto& p : passes) pp.push_back(std::vector<double>(p.probs.v.begin(), p.probs.v.end()));
  const auto readout = predictive_readout(pp, ex.target);

  EpisodeTrace tr;
  tr.example_id = example_id;
  tr.score = uncertainty_score(readout, score_cfg);
  tr.action = route(tr.score, thresholds);
  tr.category = category_of(tr.action);
  ActionPlan plan = execute(tr.action, model, ex.context, index, costs, M, seed);
  tr.steps = plan.steps;
  tr.cost = plan.cost;
  tr.mc_cost = plan.mc_cost;
  tr.retrieve_support = plan.retrieve_support;
  tr.deliberate_support = plan.deliberate_support;
  tr.resample_support = plan.resample_support;
  auto decision = final_decision(plan);
  if (decision) {
    tr.decision = *decision;
    tr.correct = *decision == ex.target;
    const double pt = (*plan.terminal)[static_cast<std::size_t>(ex.target)];
    tr.ce = pt > 0.0 ? -std::log(pt) : std::numeric_limits<double>::infinity();
  } else {
    tr.abstained = true;
    tr.decision = -1;
    tr.correct = false;
    tr.ce = std::numeric_limits<double>::quiet_NaN();
  }
  return tr;
}

void save_thresholds(const std::string& path, const Thresholds& t, const ScoreConfig& s) {
  std::ofstream os(path);
  if (!os) throw IoError("thresholds save: cannot open " + path);
  os.precision(17);
  os << "uq_green=" << t.uq_green << "\nuq_orange=" << t.uq_orange << "\nuq_red=" << t.uq_red
     << "\nuq_norm_entropy=" << s.uq_norm_entropy << "\nuq_norm_mi=" << s.uq_norm_mi
     << "\nuq_norm_flip=" << s.uq_norm_flip << "\nw_e=" << s.w_e << "\nw_m=" << s.w_m
     << "\nw_f=" << s.w_f << "\nagent_answer_min_conf=" << s.agent_answer_min_conf
     << "\npenalty=" << s.penalty << "\n";
}

void load_thresholds(const std::string& path, Thresholds& t, ScoreConfig& s) {
  std::ifstream is(path);
  if (!is) throw IoError("thresholds load: cannot open " + path);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq);
    const double v = std::stod(line.substr(eq + 1));
    if (k == "uq_green") t.uq_green = v;
    else if (k == "uq_orange") t.uq_orange = v;
    else if (k == "uq_red") t.uq_red = v;
    else if (k == "uq_norm_entropy") s.uq_norm_entropy = v;
    else if (k == "uq_norm_mi") s.uq_norm_mi = v;
    else if (k == "uq_norm_flip") s.uq_norm_flip = v;
    else if (k == "w_e") s.w_e = v;
    else if (k == "w_m") s.w_m = v;
    else if (k == "w_f") s.w_f = v;
    else if (k == "agent_answer_min_conf") s.agent_answer_min_conf = v;
    else if (k == "penalty") s.penalty = v;
  }
  t.validate();
}

}  // namespace eve

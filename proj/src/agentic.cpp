#include "eve/agentic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "eve/error.hpp"

namespace eve {

AgenticSummary summarize(const std::vector<EpisodeTrace>& traces, const CostConfig& costs) {
  if (traces.empty()) throw ContractViolation("summarize: empty trace set");
  AgenticSummary s;
  s.n_examples = traces.size();
  double acc_correct = 0.0, all_correct = 0.0;
  double ce_sum = 0.0;
  std::size_t ce_count = 0;
  double cost_sum = 0.0, mc_sum = 0.0, steps_sum = 0.0;
  std::size_t n_direct = 0, n_retrieve = 0, n_deliberate = 0, n_resample = 0;
  for (const auto& t : traces) {
    if (t.abstained) {
      ++s.abstained;
    } else {
      ++s.accepted;
      if (t.correct) {
        acc_correct += 1.0;
        all_correct += 1.0;  // abstentions count as incorrect overall
      }
      if (std::isfinite(t.ce)) {
        ce_sum += t.ce;
        ++ce_count;
      }
    }
    cost_sum += t.cost;
    mc_sum += t.mc_cost;
    steps_sum += t.steps;
    if (t.category == Category::Direct) ++n_direct;
    if (t.retrieve_support) ++n_retrieve;
    if (t.deliberate_support) ++n_deliberate;
    if (t.resample_support) ++n_resample;
  }
  const double n = static_cast<double>(s.n_examples);
  s.coverage = static_cast<double>(s.accepted) / n;
  s.abstain_rate = static_cast<double>(s.abstained) / n;
  s.accepted_acc = s.accepted ? acc_correct / static_cast<double>(s.accepted) : 0.0;
  s.overall_acc = all_correct / n;
  // abstained episodes emit non-finite CE and drop out of both CE means, so
  // accepted and overall CE coincide by construction
  s.accepted_ce = ce_count ? ce_sum / static_cast<double>(ce_count) : 0.0;
  s.overall_ce = s.accepted_ce;
  s.mean_cost = cost_sum / n;
  s.mean_mc_cost = mc_sum / n;
  s.mean_steps = steps_sum / n;
  s.direct_rate = static_cast<double>(n_direct) / n;
  s.retrieve_rate = static_cast<double>(n_retrieve) / n;
  s.deliberate_rate = static_cast<double>(n_deliberate) / n;
  s.resample_rate = static_cast<double>(n_resample) / n;
  s.utility = s.overall_acc - costs.cost_weight * s.mean_cost;
  return s;
}

double avoided_errors(const std::vector<EpisodeTrace>& routed,
                      const std::vector<bool>& direct_correct) {
  if (routed.size() != direct_correct.size())
    throw ContractViolation("avoided_errors: mismatched example sets");
  if (routed.empty()) throw ContractViolation("avoided_errors: empty input");
  std::size_t avoided = 0;
  for (std::size_t i = 0; i < routed.size(); ++i)
    if (!direct_correct[i] && !routed[i].abstained && routed[i].correct) ++avoided;
  return static_cast<double>(avoided) / static_cast<double>(routed.size());
}

bool VerificationReport::all_passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

VerificationReport verify(const AgenticSummary& s, const VerifyConfig& cfg) {
  VerificationReport r;
  r.checks = {
      {"Coverage is sufficient", s.coverage >= cfg.min_coverage, s.coverage, cfg.min_coverage},
      {"Retrieve is used", s.retrieve_rate > 0.0, s.retrieve_rate, 0.0},
      {"Deliberate is used", s.deliberate_rate > 0.0, s.deliberate_rate, 0.0},
      {"Not abstain-dominated", s.abstain_rate <= cfg.max_abstain, s.abstain_rate, cfg.max_abstain},
      {"Utility is positive", s.utility > 0.0, s.utility, 0.0},
      {"Avoids some direct errors", s.avoided_errors_vs_direct > 0.0, s.avoided_errors_vs_direct,
       0.0},
  };
  return r;
}

void export_traces_jsonl(const std::string& path, const std::vector<EpisodeTrace>& traces) {
  std::ofstream os(path);
  if (!os) throw IoError("trace export: cannot open " + path);
  char buf[512];
  for (const auto& t : traces) {
    std::snprintf(buf, sizeof(buf),
                  "{\"id\":%zu,\"score\":%.10g,\"action\":\"%s\",\"category\":\"%s\","
                  "\"steps\":%d,\"cost\":%.10g,\"mc_cost\":%.10g,"
                  "\"retrieve\":%s,\"deliberate\":%s,\"resample\":%s,"
                  "\"abstained\":%s,\"correct\":%s,\"ce\":%s,\"decision\":%d}\n",
                  t.example_id, t.score, action_name(t.action), category_name(t.category), t.steps,
                  t.cost, t.mc_cost, t.retrieve_support ? "true" : "false",
                  t.deliberate_support ? "true" : "false", t.resample_support ? "true" : "false",
                  t.abstained ? "true" : "false", t.correct ? "true" : "false",
                  std::isfinite(t.ce) ? std::to_string(t.ce).c_str() : "null", t.decision);
    os << buf;
  }
}

}  // namespace eve

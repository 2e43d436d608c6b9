#pragma once

#include <string>
#include <vector>

#include "eve/controller.hpp"

namespace eve {

struct AgenticSummary {
  std::size_t n_examples = 0;
  std::size_t accepted = 0;
  std::size_t abstained = 0;
  double coverage = 0.0;
  double accepted_acc = 0.0;
  double overall_acc = 0.0;
  double accepted_ce = 0.0;
  double overall_ce = 0.0;
  double mean_cost = 0.0;
  double mean_mc_cost = 0.0;
  double mean_steps = 0.0;
  double abstain_rate = 0.0;
  double direct_rate = 0.0;
  double retrieve_rate = 0.0;
  double deliberate_rate = 0.0;
  double resample_rate = 0.0;
  double utility = 0.0;
  double avoided_errors_vs_direct = 0.0;  // filled by avoided_errors
};

// Coverage/abstention are exclusive terminal outcomes; retrieve, deliberate
// and resample rates count support activations and may overlap.
AgenticSummary summarize(const std::vector<EpisodeTrace>& traces, const CostConfig& costs);

// Fraction of examples the direct policy got wrong and the routed policy got
// right. Both runs must cover the identical example set, in order.
double avoided_errors(const std::vector<EpisodeTrace>& routed,
                      const std::vector<bool>& direct_correct);

struct VerifyConfig {
  double min_coverage = 0.5;
  double max_abstain = 0.5;
};

struct VerificationCheck {
  std::string criterion;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
};

struct VerificationReport {
  std::vector<VerificationCheck> checks;  // always six entries
  bool all_passed() const;
};

VerificationReport verify(const AgenticSummary& summary, const VerifyConfig& cfg);

void export_traces_jsonl(const std::string& path, const std::vector<EpisodeTrace>& traces);

}  // namespace eve

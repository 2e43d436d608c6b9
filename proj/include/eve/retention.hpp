#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eve/model.hpp"
#include "eve/objective.hpp"

namespace eve {

struct EpochRecord {
  std::int64_t seed = 0;
  std::int64_t epoch = 0;
  double ce = 0.0;
  double acc = 0.0;
  double local_recon = 0.0;
  double frac_too_high = 0.0;
  double mu2_mean_eval = 0.0;
  double kl = 0.0;
  bool finite = true;
  bool task_safe = false;  // set by the filter only

  bool all_fields_finite() const;
};

struct RetentionConfig {
  double selection_ce_tolerance = 0.03;
  double selection_local_ratio = 0.90;
  double mu2_target = 0.10;

  void validate() const;
};

// Marks task_safe within the given record set:
// finite AND ce <= best_ce + tolerance AND local >= ratio * best_local,
// where best_ce / best_local are taken over the finite records of the set.
std::vector<EpochRecord> task_safe_filter(std::vector<EpochRecord> records,
                                          const RetentionConfig& cfg);

// Ascending lexicographic sort on
// (!task_safe, frac_too_high, |mu2_mean_eval - mu2_target|, -acc, ce, -local_recon),
// stable for fully tied keys. First element is the retained record.
std::vector<EpochRecord> rank_candidates(std::vector<EpochRecord> records,
                                         const RetentionConfig& cfg);

// Lexicographic minimum of (val_ce, -val_acc, epoch) over per-seed retained
// candidates; seed breaks full ties so the result is order-invariant.
EpochRecord select_final_across_seeds(const std::vector<EpochRecord>& candidates);

inline constexpr const char* kSelectionReason = "best_observed_final_validation";

struct Checkpoint {
  ParamMap params;            // trainable tensors
  Tensor embedding;           // frozen table, kept for bit-exact reload
  BackboneConfig config;
  RegulatorState regulator;
  EpochRecord record;
  std::string selection_reason;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Model model_from_checkpoint(const Checkpoint& ckpt);
Checkpoint checkpoint_from_model(const Model& model, const RegulatorState& reg,
                                 const EpochRecord& rec, const std::string& reason = "");

void export_records_csv(const std::string& path, const std::vector<EpochRecord>& records);

}  // namespace eve

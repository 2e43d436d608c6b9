#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eve/agentic.hpp"
#include "eve/config.hpp"
#include "eve/metrics.hpp"
#include "eve/retention.hpp"

namespace eve {

struct PipelineOptions {
  RunConfig cfg;
  std::string out_dir = "out";
  std::optional<std::int64_t> seed_override;
  std::optional<SweepSpec> sweep;
};

// One evaluated checkpoint; the unit every report value traces back to.
struct EvalRecordRow {
  std::string family;  // "eve" | "det"
  std::int64_t seed = 0;
  std::int64_t epoch = 0;
  double loss = 0.0, ce = 0.0, ppl = 0.0, acc = 0.0;
  double kl = 0.0, local = 0.0;
  double frac_low = 0.0, frac_too_high = 0.0, mu2 = 0.0, occupancy = 0.0;
  double nll = 0.0, ece = 0.0, mi = 0.0, epi = 0.0, flip = 0.0, cvar = 0.0;
  double beta = 1.0;
};

struct Stage1Row {
  std::string candidate;
  double lambda_band_high = 0.0;
  double ce = 0.0, local = 0.0, frac_high = 0.0, mu2 = 0.0;
};

// §-free restatement: the dataset every stage rebuilds deterministically
// from the config so stages stay independently invokable.
struct Dataset {
  Split split;
  std::shared_ptr<const EmbeddingTable> embed;
  std::size_t vocab_size = 0;
  std::uint64_t train_checksum = 0;
  std::uint64_t val_checksum = 0;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineOptions opt);

  // Stage entry points. Each writes its artifacts plus a manifest under
  // out_dir and throws on failure; agentic_eval returns the verification
  // outcome (artifacts are written either way).
  void prepare_data();
  void train();
  void evaluate();
  void select();
  void calibrate();
  bool agentic_eval();
  void report();

  // name in {prepare-data, train, evaluate, select, calibrate, agentic-eval,
  // report, run}. Returns false only when verification failed.
  bool run_stage(const std::string& name);
  bool run_all();

  Dataset build_dataset() const;
  const PipelineOptions& options() const { return opt_; }

 private:
  void write_manifest(const std::string& stage, const std::vector<std::string>& entries) const;
  std::string dir(const std::string& sub) const;

  PipelineOptions opt_;
};

// Deterministic eval seed for a (seed, epoch) checkpoint; shared between the
// training-time validation view and the standalone evaluate stage.
std::uint64_t canonical_eval_seed(std::int64_t seed, std::int64_t epoch);

std::string fmt_g(double x);  // %.10g, the report-wide number format

void write_eval_records_csv(const std::string& path, const std::vector<EvalRecordRow>& rows);
std::vector<EvalRecordRow> read_eval_records_csv(const std::string& path);
void write_stage1_csv(const std::string& path, const std::vector<Stage1Row>& rows);
std::vector<Stage1Row> read_stage1_csv(const std::string& path);

void write_agentic_summary(const std::string& path, const AgenticSummary& s,
                           std::int64_t selected_seed);
void write_verification(const std::string& csv_path, const std::string& json_path,
                        const VerificationReport& r);

}  // namespace eve

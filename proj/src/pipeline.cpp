#include "eve/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "eve/controller.hpp"
#include "eve/error.hpp"
#include "eve/objective.hpp"
#include "eve/optim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace eve {

std::string fmt_g(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

std::uint64_t canonical_eval_seed(std::int64_t seed, std::int64_t epoch) {
  return Rng::mix(0xCA11E7A1ULL,
                  static_cast<std::uint64_t>(seed) * 1009ULL + static_cast<std::uint64_t>(epoch));
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(tok);
  return out;
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

EpochRecord record_from_row(const EvalRecordRow& r) {
  EpochRecord rec;
  rec.seed = r.seed;
  rec.epoch = r.epoch;
  rec.ce = r.ce;
  rec.acc = r.acc;
  rec.local_recon = r.local;
  rec.frac_too_high = r.frac_too_high;
  rec.mu2_mean_eval = r.mu2;
  rec.kl = r.kl;
  rec.finite = rec.all_fields_finite();
  return rec;
}

// Per-seed retained row for one family: task-safe filter + structural rank
// within each seed's epoch set, then the first element.
std::map<std::int64_t, EvalRecordRow> per_seed_retained(const std::vector<EvalRecordRow>& rows,
                                                        const std::string& family,
                                                        const RetentionConfig& cfg) {
  std::map<std::int64_t, std::vector<EvalRecordRow>> by_seed;
  for (const auto& r : rows)
    if (r.family == family) by_seed[r.seed].push_back(r);
  std::map<std::int64_t, EvalRecordRow> out;
  for (auto& [seed, group] : by_seed) {
    std::vector<EpochRecord> recs;
    for (const auto& r : group) recs.push_back(record_from_row(r));
    const auto ranked = rank_candidates(task_safe_filter(recs, cfg), cfg);
    const auto& top = ranked.front();
    for (const auto& r : group)
      if (r.epoch == top.epoch) out[seed] = r;
  }
  return out;
}

const EvalRecordRow* find_row(const std::vector<EvalRecordRow>& rows, const std::string& family,
                              std::int64_t seed, std::int64_t epoch) {
  for (const auto& r : rows)
    if (r.family == family && r.seed == seed && r.epoch == epoch) return &r;
  return nullptr;
}

// Band value under the evaluation convention (unit scales = 1).
double band_value(const std::vector<double>& unit_mu2, const BandConfig& band) {
  if (unit_mu2.empty()) return 0.0;
  double acc = 0.0;
  for (double m2 : unit_mu2)
    acc += std::max(0.0, band.band_low - m2) +
           band.lambda_band_high * std::max(0.0, m2 - band.band_high);
  return acc / static_cast<double>(unit_mu2.size());
}

EvalRecordRow row_from_summary(const std::string& family, std::int64_t seed, std::int64_t epoch,
                               const EvalSummary& s, const BandConfig& band, double beta,
                               double lambda_local, double lambda_band) {
  EvalRecordRow r;
  r.family = family;
  r.seed = seed;
  r.epoch = epoch;
  r.ce = s.ce;
  r.ppl = s.ppl;
  r.acc = s.acc;
  r.kl = s.kl;
  r.local = s.local;
  r.frac_low = s.frac_low;
  r.frac_too_high = s.frac_too_high;
  r.mu2 = s.mu2_mean_eval;
  r.occupancy = s.band_occupancy;
  r.nll = s.nll;
  r.ece = s.ece;
  r.mi = s.mean_mi;
  r.epi = s.mean_epi;
  r.flip = s.mean_flip;
  r.cvar = s.cvar_nll;
  r.beta = beta;
  if (family == "eve") {
    const double mse = s.local > 0.0 ? 1.0 / s.local - 1.0 : 0.0;
    r.loss = s.ce + beta * s.kl + lambda_local * mse + lambda_band * band_value(s.unit_mu2, band);
  } else {
    r.loss = s.ce;
  }
  return r;
}

struct SeedTrainResult {
  std::vector<EpochRecord> records;
  std::vector<EvalRecordRow> eval_rows;  // training-time validation view
  RegulatorState regulator;
  // epoch -> (beta, diagnostics) trajectory lines
  std::vector<std::string> trajectory;
};

// One family / one seed training run. Saves one checkpoint per epoch when
// ckpt_dir is non-empty.
SeedTrainResult train_one(const RunConfig& cfg, const Dataset& data, bool variational,
                          std::int64_t seed, const std::string& ckpt_dir) {
  BackboneConfig bb = cfg.backbone;
  bb.variational = variational;
  bb.context_len = cfg.data.context_len;
  const std::string family = variational ? "eve" : "det";
  Model model(bb, data.embed, Rng::mix(static_cast<std::uint64_t>(seed),
                                       variational ? 0xE0EULL : 0xD00ULL));
  RegulatorState reg = RegulatorState::init(bb.latent_dim, cfg.regulator);
  reg.high_threshold = cfg.band.band_high;

  Optimizer opt({cfg.train.lr, cfg.train.weight_decay});
  const auto& train_set = data.split.train;
  const std::size_t B = cfg.train.batch_size;

  SeedTrainResult out;
  for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    // epoch-local shuffle stream
    Rng sr(Rng::mix(static_cast<std::uint64_t>(seed), 0x50000ULL + epoch));
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[sr.uniform_index(i)]);
    Rng er(Rng::mix(static_cast<std::uint64_t>(seed), 0xE9500ULL + epoch));

    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t end = std::min(order.size(), start + B);
      std::vector<TokenSeq> contexts;
      std::vector<int> targets;
      for (std::size_t i = start; i < end; ++i) {
        contexts.push_back(train_set[order[i]].context);
        targets.push_back(train_set[order[i]].target);
      }
      Graph g;
      const auto pnodes = model.register_params(g);
      const Tensor input = model.context_input(contexts);
      std::vector<Tensor> eps;
      if (variational)
        for (std::size_t m = 0; m < bb.mc_samples_train; ++m)
          eps.push_back(model.draw_eps(contexts.size(), er));
      const LossNodes nodes = build_loss(g, model, pnodes, input, targets, eps, cfg.band, reg);
      breakdown_from(g, nodes, cfg.band, reg.beta, variational);  // finiteness gate
      auto grads = g.backward(nodes.total);
      grads = clip_global_norm(grads, cfg.train.clip_grad);
      opt.step(model.params(), grads);
    }

    const auto eval = canonical_eval(model, data.split.val, cfg.band, bb.mc_samples_eval,
                                     canonical_eval_seed(seed, static_cast<std::int64_t>(epoch)));
    const auto& s = eval.summary;

    EpochRecord rec;
    rec.seed = seed;
    rec.epoch = static_cast<std::int64_t>(epoch);
    rec.ce = s.ce;
    rec.acc = s.acc;
    rec.local_recon = s.local;
    rec.frac_too_high = s.frac_too_high;
    rec.mu2_mean_eval = s.mu2_mean_eval;
    rec.kl = s.kl;
    rec.finite = rec.all_fields_finite();
    out.records.push_back(rec);
    out.eval_rows.push_back(row_from_summary(family, seed, rec.epoch, s, cfg.band, reg.beta,
                                             cfg.band.lambda_local, cfg.band.lambda_band));

    if (variational) {
      EpochDiagnostics diag;
      diag.kl_per_unit = s.kl / static_cast<double>(bb.latent_dim);
      diag.mu2_mean = s.mu2_mean_eval;
      diag.occupancy = s.band_occupancy;
      diag.frac_low = s.frac_low;
      diag.frac_high = s.frac_too_high;
      diag.unit_mu2 = s.unit_mu2;
      reg = autopilot_step(reg, diag, cfg.regulator);
      out.trajectory.push_back(std::to_string(seed) + "," + std::to_string(epoch) + "," +
                               fmt_g(reg.beta) + "," + fmt_g(diag.kl_per_unit) + "," +
                               fmt_g(diag.mu2_mean) + "," + fmt_g(diag.occupancy) + "," +
                               fmt_g(diag.frac_low) + "," + fmt_g(diag.frac_high));
    }

    if (!ckpt_dir.empty()) {
      const Checkpoint ckpt = checkpoint_from_model(model, reg, rec, kSelectionReason);
      save_checkpoint(ckpt, ckpt_dir + "/" + family + "_s" + std::to_string(seed) + "_e" +
                                std::to_string(epoch) + ".ckpt");
    }
  }
  out.regulator = reg;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Pipeline::Pipeline(PipelineOptions opt) : opt_(std::move(opt)) {
  opt_.cfg.validate();
  fs::create_directories(opt_.out_dir);
  for (const char* sub : {"manifests", "data", "checkpoints", "train", "eval", "select",
                          "calibrate", "agentic", "report"})
    fs::create_directories(fs::path(opt_.out_dir) / sub);
}

std::string Pipeline::dir(const std::string& sub) const {
  return (fs::path(opt_.out_dir) / sub).string();
}

void Pipeline::write_manifest(const std::string& stage,
                              const std::vector<std::string>& entries) const {
  const std::string path = dir("manifests") + "/" + stage + ".txt";
  std::ofstream os(path);
  if (!os) throw IoError("manifest: cannot open " + path);
  os << "stage=" << stage << "\n";
  os << "config_digest=" << fnv1a(serialize_config(opt_.cfg)) << "\n";
  for (const auto& e : entries) os << e << "\n";
  os << "status=done\n";
}

Dataset Pipeline::build_dataset() const {
  const RunConfig& cfg = opt_.cfg;
  Dataset d;
  std::vector<RawPair> pairs;
  if (!cfg.corpus_import_path.empty()) {
    pairs = import_corpus(cfg.corpus_import_path, d.vocab_size);
  } else {
    pairs = synthetic_corpus(cfg.corpus, cfg.data);
    d.vocab_size = cfg.corpus.vocab_size;
  }
  for (auto& p : pairs) truncate_pair(p, cfg.data);
  pairs = apply_dataset_fraction(std::move(pairs), cfg.data.dataset_fraction);
  const auto examples = make_examples(pairs, cfg.data);
  d.split = split_examples(examples, pairs.size(), cfg.data.val_frac, cfg.data.seed);
  if (!cfg.embedding_import_path.empty())
    d.embed = std::make_shared<const EmbeddingTable>(EmbeddingTable::import_file(
        cfg.embedding_import_path, d.vocab_size, cfg.backbone.embed_dim));
  else
    d.embed = std::make_shared<const EmbeddingTable>(
        EmbeddingTable::seeded(d.vocab_size, cfg.backbone.embed_dim, cfg.embedding_seed));
  d.train_checksum = examples_checksum(d.split.train);
  d.val_checksum = examples_checksum(d.split.val);
  return d;
}

void Pipeline::prepare_data() {
  const Dataset d = build_dataset();
  // persist the raw inputs for the record; downstream stages rebuild from
  // config so every stage stays independently invokable
  std::vector<RawPair> pairs;
  if (!opt_.cfg.corpus_import_path.empty()) {
    std::size_t v = 0;
    pairs = import_corpus(opt_.cfg.corpus_import_path, v);
  } else {
    pairs = synthetic_corpus(opt_.cfg.corpus, opt_.cfg.data);
  }
  export_corpus(dir("data") + "/corpus.txt", pairs, d.vocab_size);
  d.embed->export_file(dir("data") + "/embedding.bin");
  write_manifest("prepare-data",
                 {"vocab_size=" + std::to_string(d.vocab_size),
                  "num_pairs=" + std::to_string(pairs.size()),
                  "train_examples=" + std::to_string(d.split.train.size()),
                  "val_examples=" + std::to_string(d.split.val.size()),
                  "train_checksum=" + std::to_string(d.train_checksum),
                  "val_checksum=" + std::to_string(d.val_checksum),
                  "artifact=" + dir("data") + "/corpus.txt",
                  "artifact=" + dir("data") + "/embedding.bin"});
}

void Pipeline::train() {
  const RunConfig& cfg = opt_.cfg;
  const Dataset data = build_dataset();
  std::vector<std::int64_t> seeds = cfg.train.seeds;
  if (opt_.seed_override) seeds = {*opt_.seed_override};

  if (opt_.sweep) {
    // stage-1 search: first seed only, EVE only, no retained checkpoints
    std::vector<Stage1Row> rows;
    for (std::size_t i = 0; i < opt_.sweep->values.size(); ++i) {
      RunConfig swept = cfg;
      swept.band.lambda_band_high = opt_.sweep->values[i];
      const auto res = train_one(swept, data, true, seeds.front(), "");
      const auto& last = res.eval_rows.back();
      Stage1Row r;
      char label[32];
      std::snprintf(label, sizeof(label), "Stage1 %02zu", i + 1);
      r.candidate = label;
      r.lambda_band_high = opt_.sweep->values[i];
      r.ce = last.ce;
      r.local = last.local;
      r.frac_high = last.frac_too_high;
      r.mu2 = last.mu2;
      rows.push_back(r);
    }
    write_stage1_csv(dir("train") + "/stage1.csv", rows);
    write_manifest("train", {"mode=sweep", "sweep_key=" + opt_.sweep->key,
                             "candidates=" + std::to_string(rows.size()),
                             "seed=" + std::to_string(seeds.front()),
                             "artifact=" + dir("train") + "/stage1.csv"});
    return;
  }

  std::vector<EpochRecord> eve_records, det_records;
  std::vector<EvalRecordRow> rows;
  std::vector<std::string> trajectory;
  std::vector<std::string> manifest = {"mode=full"};
  for (std::int64_t seed : seeds) {
    auto eve = train_one(cfg, data, true, seed, dir("checkpoints"));
    auto det = train_one(cfg, data, false, seed, dir("checkpoints"));
    eve_records.insert(eve_records.end(), eve.records.begin(), eve.records.end());
    det_records.insert(det_records.end(), det.records.begin(), det.records.end());
    rows.insert(rows.end(), eve.eval_rows.begin(), eve.eval_rows.end());
    rows.insert(rows.end(), det.eval_rows.begin(), det.eval_rows.end());
    trajectory.insert(trajectory.end(), eve.trajectory.begin(), eve.trajectory.end());
    for (std::size_t e = 1; e <= cfg.train.epochs; ++e) {
      manifest.push_back("checkpoint=eve seed=" + std::to_string(seed) +
                         " epoch=" + std::to_string(e));
      manifest.push_back("checkpoint=det seed=" + std::to_string(seed) +
                         " epoch=" + std::to_string(e));
    }
  }
  export_records_csv(dir("train") + "/records_eve.csv", eve_records);
  export_records_csv(dir("train") + "/records_det.csv", det_records);
  write_eval_records_csv(dir("train") + "/train_eval_view.csv", rows);
  {
    std::ofstream os(dir("train") + "/regulator.csv");
    if (!os) throw IoError("train: cannot open regulator.csv");
    os << "seed,epoch,beta,kl_per_unit,mu2,occupancy,frac_low,frac_high\n";
    for (const auto& line : trajectory) os << line << "\n";
  }
  manifest.push_back("artifact=" + dir("train") + "/records_eve.csv");
  manifest.push_back("artifact=" + dir("train") + "/records_det.csv");
  manifest.push_back("artifact=" + dir("train") + "/regulator.csv");
  write_manifest("train", manifest);
}

void Pipeline::evaluate() {
  const RunConfig& cfg = opt_.cfg;
  const Dataset data = build_dataset();
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir("checkpoints")))
    if (e.path().extension() == ".ckpt") paths.push_back(e.path().string());
  if (paths.empty()) throw IoError("evaluate: no checkpoints under " + dir("checkpoints"));
  std::sort(paths.begin(), paths.end());

  std::vector<EvalRecordRow> rows;
  std::vector<std::string> manifest;
  for (const auto& p : paths) {
    const Checkpoint ckpt = load_checkpoint(p);
    const Model model = model_from_checkpoint(ckpt);
    const std::string family = ckpt.config.variational ? "eve" : "det";
    const auto eval =
        canonical_eval(model, data.split.val, cfg.band, ckpt.config.mc_samples_eval,
                       canonical_eval_seed(ckpt.record.seed, ckpt.record.epoch));
    rows.push_back(row_from_summary(family, ckpt.record.seed, ckpt.record.epoch, eval.summary,
                                    cfg.band, ckpt.regulator.beta, cfg.band.lambda_local,
                                    cfg.band.lambda_band));
    manifest.push_back("evaluated=" + family + " seed=" + std::to_string(ckpt.record.seed) +
                       " epoch=" + std::to_string(ckpt.record.epoch) + " path=" + p);
  }
  write_eval_records_csv(dir("eval") + "/eval_records.csv", rows);
  manifest.push_back("artifact=" + dir("eval") + "/eval_records.csv");
  write_manifest("evaluate", manifest);
}

void Pipeline::select() {
  const RunConfig& cfg = opt_.cfg;
  const auto rows = read_eval_records_csv(dir("eval") + "/eval_records.csv");

  std::map<std::string, EvalRecordRow> chosen;
  for (const std::string family : {"eve", "det"}) {
    const auto retained = per_seed_retained(rows, family, cfg.retention);
    if (retained.empty()) throw DataError("select: no evaluated checkpoints for " + family);
    if (opt_.seed_override) {
      const auto it = retained.find(*opt_.seed_override);
      if (it == retained.end())
        throw ConfigError("select: seed override " + std::to_string(*opt_.seed_override) +
                          " has no evaluated checkpoints");
      chosen[family] = it->second;
    } else {
      std::vector<EpochRecord> candidates;
      for (const auto& [seed, row] : retained) candidates.push_back(record_from_row(row));
      const EpochRecord final = select_final_across_seeds(candidates);
      chosen[family] = retained.at(final.seed);
    }
  }

  std::vector<std::string> manifest;
  {
    std::ofstream os(dir("select") + "/selection.txt");
    if (!os) throw IoError("select: cannot open selection.txt");
    for (const auto& [family, row] : chosen) {
      os << family << "_seed=" << row.seed << "\n" << family << "_epoch=" << row.epoch << "\n";
      const EpochRecord rec = record_from_row(row);
      const auto safe = task_safe_filter({rec}, cfg.retention);
      os << family << "_task_safe=" << (safe.front().task_safe ? 1 : 0) << "\n";
    }
    os << "reason=" << kSelectionReason << "\n";
  }
  for (const auto& [family, row] : chosen) {
    const std::string src = dir("checkpoints") + "/" + family + "_s" + std::to_string(row.seed) +
                            "_e" + std::to_string(row.epoch) + ".ckpt";
    const std::string dst = dir("select") + "/retained_" + family + ".ckpt";
    if (!fs::exists(src)) throw IoError("select: missing checkpoint " + src);
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
    manifest.push_back("retained=" + family + " seed=" + std::to_string(row.seed) +
                       " epoch=" + std::to_string(row.epoch) + " path=" + dst);
  }
  manifest.push_back("reason=" + std::string(kSelectionReason));
  manifest.push_back("artifact=" + dir("select") + "/selection.txt");
  write_manifest("select", manifest);
}

void Pipeline::calibrate() {
  const RunConfig& cfg = opt_.cfg;
  const Dataset data = build_dataset();
  const Checkpoint ckpt = load_checkpoint(dir("select") + "/retained_eve.ckpt");
  const Model model = model_from_checkpoint(ckpt);

  const auto eval = canonical_eval(model, data.split.val, cfg.band,
                                   ckpt.config.mc_samples_eval,
                                   canonical_eval_seed(ckpt.record.seed, ckpt.record.epoch));
  std::vector<double> scores;
  for (const auto& r : eval.readouts) scores.push_back(uncertainty_score(r, cfg.score));
  export_readouts_csv(dir("calibrate") + "/val_readouts.csv", eval.readouts);

  const Thresholds basic = calibrate_basic(scores);

  const std::size_t K = std::min(cfg.calib_sim_examples, data.split.val.size());
  std::vector<TokenSeq> index_ctx;
  for (std::size_t i = 0; i < std::min(cfg.retrieval_index_size, data.split.train.size()); ++i)
    index_ctx.push_back(data.split.train[i].context);
  const RetrievalIndex index(*data.embed, index_ctx);

  const auto policy = [&](const Thresholds& t) {
    std::vector<EpisodeTrace> traces;
    for (std::size_t i = 0; i < K; ++i)
      traces.push_back(run_episode(model, &index, data.split.val[i], i, cfg.score, t, cfg.cost,
                                   Rng::mix(0xCA51ULL, i)));
    const AgenticSummary s = summarize(traces, cfg.cost);
    PolicyOutcome o;
    o.utility = s.utility;
    o.coverage = s.coverage;
    o.abstain_rate = s.abstain_rate;
    o.retrieve_rate = s.retrieve_rate;
    o.mean_cost = s.mean_cost;
    return o;
  };
  const Thresholds full = calibrate_full(scores, cfg.calibration, policy);
  save_thresholds(dir("calibrate") + "/thresholds.txt", full, cfg.score);

  write_manifest(
      "calibrate",
      {"seed=" + std::to_string(ckpt.record.seed), "epoch=" + std::to_string(ckpt.record.epoch),
       "n_scores=" + std::to_string(scores.size()), "sim_examples=" + std::to_string(K),
       "basic=" + fmt_g(basic.uq_green) + "," + fmt_g(basic.uq_orange) + "," +
           fmt_g(basic.uq_red),
       "full=" + fmt_g(full.uq_green) + "," + fmt_g(full.uq_orange) + "," + fmt_g(full.uq_red),
       "artifact=" + dir("calibrate") + "/thresholds.txt"});
}

bool Pipeline::agentic_eval() {
  const RunConfig& cfg = opt_.cfg;
  const Dataset data = build_dataset();
  const Checkpoint ckpt = load_checkpoint(dir("select") + "/retained_eve.ckpt");
  const Model model = model_from_checkpoint(ckpt);
  Thresholds t;
  ScoreConfig sc = cfg.score;
  load_thresholds(dir("calibrate") + "/thresholds.txt", t, sc);

  std::vector<TokenSeq> index_ctx;
  for (std::size_t i = 0; i < std::min(cfg.retrieval_index_size, data.split.train.size()); ++i)
    index_ctx.push_back(data.split.train[i].context);
  const RetrievalIndex index(*data.embed, index_ctx);

  const std::size_t N = std::min(cfg.agentic_examples, data.split.val.size());
  if (N == 0) throw DataError("agentic-eval: empty validation set");
  std::vector<EpisodeTrace> traces;
  std::vector<bool> direct_correct;
  for (std::size_t i = 0; i < N; ++i) {
    const Example& ex = data.split.val[i];
    traces.push_back(run_episode(model, &index, ex, i, sc, t, cfg.cost,
                                 Rng::mix(0xA9E0CULL, i)));
    const ActionPlan direct = execute(Action::Answer, model, ex.context, nullptr, cfg.cost,
                                      ckpt.config.mc_samples_eval, Rng::mix(0xD18EC7ULL, i));
    const auto decision = final_decision(direct);
    direct_correct.push_back(decision && *decision == ex.target);
  }
  AgenticSummary summary = summarize(traces, cfg.cost);
  summary.avoided_errors_vs_direct = avoided_errors(traces, direct_correct);
  const VerificationReport vr = verify(summary, cfg.verify_cfg);

  export_traces_jsonl(dir("agentic") + "/traces.jsonl", traces);
  write_agentic_summary(dir("agentic") + "/summary.txt", summary, ckpt.record.seed);
  write_verification(dir("agentic") + "/verification.csv", dir("agentic") + "/verification.json",
                     vr);
  std::vector<std::string> manifest = {
      "seed=" + std::to_string(ckpt.record.seed), "epoch=" + std::to_string(ckpt.record.epoch),
      "n_examples=" + std::to_string(N),
      "verification=" + std::string(vr.all_passed() ? "passed" : "failed"),
      "artifact=" + dir("agentic") + "/traces.jsonl",
      "artifact=" + dir("agentic") + "/summary.txt",
      "artifact=" + dir("agentic") + "/verification.csv"};
  write_manifest("agentic-eval", manifest);
  return vr.all_passed();
}

// ---------------------------------------------------------------------------

namespace {

void write_table(const std::string& base, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  {
    std::ofstream os(base + ".csv");
    if (!os) throw IoError("report: cannot open " + base + ".csv");
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << "\n";
    }
  }
  json arr = json::array();
  for (const auto& r : rows) {
    json obj = json::object();
    for (std::size_t i = 0; i < header.size(); ++i) {
      // numeric where possible so the JSON variant carries typed values
      char* endp = nullptr;
      const double x = std::strtod(r[i].c_str(), &endp);
      if (endp && *endp == '\0' && !r[i].empty())
        obj[header[i]] = x;
      else
        obj[header[i]] = r[i];
    }
    arr.push_back(obj);
  }
  std::ofstream js(base + ".json");
  if (!js) throw IoError("report: cannot open " + base + ".json");
  js << arr.dump(2) << "\n";
}

}  // namespace

void Pipeline::report() {
  const RunConfig& cfg = opt_.cfg;
  std::vector<std::string> manifest;
  std::vector<std::string> missing;

  std::vector<EvalRecordRow> rows;
  std::map<std::string, std::string> selection;
  const bool have_eval = fs::exists(dir("eval") + "/eval_records.csv");
  const bool have_sel = fs::exists(dir("select") + "/selection.txt");
  if (have_eval) rows = read_eval_records_csv(dir("eval") + "/eval_records.csv");
  if (have_sel) selection = read_kv(dir("select") + "/selection.txt");

  if (have_eval && have_sel) {
    // backbone comparison: the cross-seed retained row of each family
    std::vector<std::vector<std::string>> bb;
    for (const std::string family : {"eve", "det"}) {
      const auto seed = std::stoll(selection.at(family + "_seed"));
      const auto epoch = std::stoll(selection.at(family + "_epoch"));
      const EvalRecordRow* r = find_row(rows, family, seed, epoch);
      if (!r) throw DataError("report: selection points at a missing eval record");
      bb.push_back({family == "eve" ? "EVE" : "DET", fmt_g(r->loss), fmt_g(r->ce), fmt_g(r->ppl),
                    fmt_g(r->acc), fmt_g(r->kl), fmt_g(r->local)});
      manifest.push_back("backbone_comparison<-eval seed=" + std::to_string(seed) +
                         " epoch=" + std::to_string(epoch));
    }
    write_table(dir("report") + "/backbone_comparison",
                {"Model", "Loss", "CE", "PPL", "Acc.", "KL", "Local"}, bb);

    std::vector<std::vector<std::string>> sc;
    for (const auto& [seed, r] : per_seed_retained(rows, "eve", cfg.retention)) {
      sc.push_back({"EVE S" + std::to_string(seed), std::to_string(r.epoch), fmt_g(r.ce),
                    fmt_g(r.ppl), fmt_g(r.acc), fmt_g(r.kl), fmt_g(r.local)});
      manifest.push_back("seed_comparison<-eval seed=" + std::to_string(seed) +
                         " epoch=" + std::to_string(r.epoch));
    }
    write_table(dir("report") + "/seed_comparison",
                {"Seed", "Best epoch", "Val CE", "Val PPL", "Val Acc.", "Val KL", "Val Local"},
                sc);

    std::vector<std::vector<std::string>> uq;
    for (const std::string family : {"eve", "det"}) {
      const auto seed = std::stoll(selection.at(family + "_seed"));
      const auto epoch = std::stoll(selection.at(family + "_epoch"));
      const EvalRecordRow* r = find_row(rows, family, seed, epoch);
      uq.push_back({family == "eve" ? "EVE" : "DET", fmt_g(r->nll), fmt_g(r->ece), fmt_g(r->mi),
                    fmt_g(r->epi), fmt_g(r->flip), fmt_g(r->cvar), fmt_g(r->frac_too_high),
                    fmt_g(r->mu2)});
      manifest.push_back("uncertainty_summary<-eval seed=" + std::to_string(seed) +
                         " epoch=" + std::to_string(epoch));
    }
    write_table(dir("report") + "/uncertainty_summary",
                {"Model", "NLL", "ECE", "MI", "Epi.", "Flip", "CVaR-NLL", "Frac. High", "mu^2"},
                uq);
  } else {
    missing.insert(missing.end(),
                   {"backbone_comparison", "seed_comparison", "uncertainty_summary"});
  }

  if (fs::exists(dir("train") + "/stage1.csv")) {
    const auto s1 = read_stage1_csv(dir("train") + "/stage1.csv");
    std::vector<std::vector<std::string>> rows1;
    for (const auto& r : s1)
      rows1.push_back({r.candidate, fmt_g(r.lambda_band_high), fmt_g(r.ce), fmt_g(r.local),
                       fmt_g(r.frac_high), fmt_g(r.mu2)});
    write_table(dir("report") + "/stage1_search",
                {"Candidate", "lambda_band_high", "CE", "Local", "Frac. High", "mu^2"}, rows1);
    manifest.push_back("stage1_search<-train sweep");
  } else {
    missing.push_back("stage1_search");
  }

  if (fs::exists(dir("agentic") + "/summary.txt")) {
    std::vector<std::vector<std::string>> rows5;
    std::ifstream is(dir("agentic") + "/summary.txt");
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos)
        rows5.push_back({line.substr(0, eq), line.substr(eq + 1)});
    }
    write_table(dir("report") + "/agentic_summary", {"Metric", "Value"}, rows5);
    manifest.push_back("agentic_summary<-agentic-eval");
  } else {
    missing.push_back("agentic_summary");
  }

  if (fs::exists(dir("agentic") + "/verification.csv")) {
    std::ifstream is(dir("agentic") + "/verification.csv");
    std::string line;
    std::getline(is, line);  // header
    std::vector<std::vector<std::string>> rows6;
    while (std::getline(is, line))
      if (!line.empty()) rows6.push_back(split_csv_line(line));
    write_table(dir("report") + "/verification", {"Criterion", "Passed", "Value"}, rows6);
    manifest.push_back("verification<-agentic-eval");
  } else {
    missing.push_back("verification");
  }

  for (const auto& m : missing) manifest.push_back("missing=" + m);
  write_manifest("report", manifest);
}

bool Pipeline::run_all() {
  prepare_data();
  train();
  evaluate();
  select();
  calibrate();
  const bool ok = agentic_eval();
  report();
  return ok;
}

bool Pipeline::run_stage(const std::string& name) {
  if (name == "prepare-data") prepare_data();
  else if (name == "train") train();
  else if (name == "evaluate") evaluate();
  else if (name == "select") select();
  else if (name == "calibrate") calibrate();
  else if (name == "agentic-eval") return agentic_eval();
  else if (name == "report") report();
  else if (name == "run") return run_all();
  else throw ConfigError("unknown stage '" + name + "'");
  return true;
}

// ---------------------------------------------------------------------------

void write_eval_records_csv(const std::string& path, const std::vector<EvalRecordRow>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  os << "family,seed,epoch,loss,ce,ppl,acc,kl,local,frac_low,frac_too_high,mu2,occupancy,nll,"
        "ece,mi,epi,flip,cvar,beta\n";
  for (const auto& r : rows) {
    os << r.family << "," << r.seed << "," << r.epoch << "," << fmt_g(r.loss) << ","
       << fmt_g(r.ce) << "," << fmt_g(r.ppl) << "," << fmt_g(r.acc) << "," << fmt_g(r.kl) << ","
       << fmt_g(r.local) << "," << fmt_g(r.frac_low) << "," << fmt_g(r.frac_too_high) << ","
       << fmt_g(r.mu2) << "," << fmt_g(r.occupancy) << "," << fmt_g(r.nll) << ","
       << fmt_g(r.ece) << "," << fmt_g(r.mi) << "," << fmt_g(r.epi) << "," << fmt_g(r.flip)
       << "," << fmt_g(r.cvar) << "," << fmt_g(r.beta) << "\n";
  }
}

std::vector<EvalRecordRow> read_eval_records_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  std::getline(is, line);  // header
  std::vector<EvalRecordRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 20) throw DataError("eval records: malformed row in " + path);
    EvalRecordRow r;
    r.family = f[0];
    r.seed = std::stoll(f[1]);
    r.epoch = std::stoll(f[2]);
    r.loss = std::stod(f[3]);
    r.ce = std::stod(f[4]);
    r.ppl = std::stod(f[5]);
    r.acc = std::stod(f[6]);
    r.kl = std::stod(f[7]);
    r.local = std::stod(f[8]);
    r.frac_low = std::stod(f[9]);
    r.frac_too_high = std::stod(f[10]);
    r.mu2 = std::stod(f[11]);
    r.occupancy = std::stod(f[12]);
    r.nll = std::stod(f[13]);
    r.ece = std::stod(f[14]);
    r.mi = std::stod(f[15]);
    r.epi = std::stod(f[16]);
    r.flip = std::stod(f[17]);
    r.cvar = std::stod(f[18]);
    r.beta = std::stod(f[19]);
    out.push_back(r);
  }
  return out;
}

void write_stage1_csv(const std::string& path, const std::vector<Stage1Row>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  os << "candidate,lambda_band_high,ce,local,frac_high,mu2\n";
  for (const auto& r : rows)
    os << r.candidate << "," << fmt_g(r.lambda_band_high) << "," << fmt_g(r.ce) << ","
       << fmt_g(r.local) << "," << fmt_g(r.frac_high) << "," << fmt_g(r.mu2) << "\n";
}

std::vector<Stage1Row> read_stage1_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  std::getline(is, line);
  std::vector<Stage1Row> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw DataError("stage1: malformed row in " + path);
    out.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                   std::stod(f[5])});
  }
  return out;
}

void write_agentic_summary(const std::string& path, const AgenticSummary& s,
                           std::int64_t selected_seed) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  os << "Selected seed=" << selected_seed << "\n"
     << "Number of examples=" << s.n_examples << "\n"
     << "Accepted examples=" << s.accepted << "\n"
     << "Abstained examples=" << s.abstained << "\n"
     << "Coverage=" << fmt_g(s.coverage) << "\n"
     << "Accepted accuracy=" << fmt_g(s.accepted_acc) << "\n"
     << "Overall accuracy=" << fmt_g(s.overall_acc) << "\n"
     << "Accepted CE=" << fmt_g(s.accepted_ce) << "\n"
     << "Overall CE=" << fmt_g(s.overall_ce) << "\n"
     << "Mean cost=" << fmt_g(s.mean_cost) << "\n"
     << "Mean MC cost=" << fmt_g(s.mean_mc_cost) << "\n"
     << "Mean steps=" << fmt_g(s.mean_steps) << "\n"
     << "Abstain rate=" << fmt_g(s.abstain_rate) << "\n"
     << "Direct rate=" << fmt_g(s.direct_rate) << "\n"
     << "Retrieve rate=" << fmt_g(s.retrieve_rate) << "\n"
     << "Deliberate rate=" << fmt_g(s.deliberate_rate) << "\n"
     << "Resample rate=" << fmt_g(s.resample_rate) << "\n"
     << "Utility=" << fmt_g(s.utility) << "\n"
     << "Avoided errors vs direct=" << fmt_g(s.avoided_errors_vs_direct) << "\n";
}

void write_verification(const std::string& csv_path, const std::string& json_path,
                        const VerificationReport& r) {
  {
    std::ofstream os(csv_path);
    if (!os) throw IoError("cannot open " + csv_path);
    os << "Criterion,Passed,Value\n";
    for (const auto& c : r.checks)
      os << c.criterion << "," << (c.passed ? "True" : "False") << "," << fmt_g(c.value) << "\n";
  }
  json arr = json::array();
  for (const auto& c : r.checks)
    arr.push_back({{"Criterion", c.criterion}, {"Passed", c.passed}, {"Value", c.value}});
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot open " + json_path);
  js << arr.dump(2) << "\n";
}

}  // namespace eve

#include "eve/retention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "eve/error.hpp"

namespace eve {

bool EpochRecord::all_fields_finite() const {
  return std::isfinite(ce) && std::isfinite(acc) && std::isfinite(local_recon) &&
         std::isfinite(frac_too_high) && std::isfinite(mu2_mean_eval) && std::isfinite(kl);
}

void RetentionConfig::validate() const {
  if (selection_ce_tolerance < 0.0) throw ConfigError("retention: ce tolerance must be >= 0");
  if (!(selection_local_ratio > 0.0 && selection_local_ratio <= 1.0))
    throw ConfigError("retention: local ratio must be in (0, 1]");
}

std::vector<EpochRecord> task_safe_filter(std::vector<EpochRecord> records,
                                          const RetentionConfig& cfg) {
  if (records.empty()) throw ContractViolation("task_safe_filter: empty record set");
  cfg.validate();
  double best_ce = std::numeric_limits<double>::infinity();
  double best_local = -std::numeric_limits<double>::infinity();
  for (auto& r : records) {
    r.finite = r.all_fields_finite();
    if (!r.finite) continue;
    best_ce = std::min(best_ce, r.ce);
    best_local = std::max(best_local, r.local_recon);
  }
  for (auto& r : records) {
    r.task_safe = r.finite && r.ce <= best_ce + cfg.selection_ce_tolerance &&
                  r.local_recon >= cfg.selection_local_ratio * best_local;
  }
  return records;
}

std::vector<EpochRecord> rank_candidates(std::vector<EpochRecord> records,
                                         const RetentionConfig& cfg) {
  if (records.empty()) throw ContractViolation("rank_candidates: empty record set");
  auto key_less = [&cfg](const EpochRecord& a, const EpochRecord& b) {
    auto tie = [&cfg](const EpochRecord& r) {
      // non-finite records sort deterministically to the very end; leaving
      // NaN in the keys would break the strict weak ordering
      const double inf = std::numeric_limits<double>::infinity();
      if (!r.all_fields_finite())
        return std::make_tuple(1, inf, inf, inf, inf, inf);
      return std::make_tuple(r.task_safe ? 0 : 1, r.frac_too_high,
                             std::abs(r.mu2_mean_eval - cfg.mu2_target), -r.acc, r.ce,
                             -r.local_recon);
    };
    return tie(a) < tie(b);
  };
  std::stable_sort(records.begin(), records.end(), key_less);
  return records;
}

EpochRecord select_final_across_seeds(const std::vector<EpochRecord>& candidates) {
  if (candidates.empty()) throw ContractViolation("select_final_across_seeds: empty candidate set");
  auto key = [](const EpochRecord& r) {
    return std::make_tuple(r.ce, -r.acc, r.epoch, r.seed);
  };
  const EpochRecord* best = &candidates[0];
  for (const auto& c : candidates)
    if (key(c) < key(*best)) best = &c;
  return *best;
}

// --- checkpoint container -------------------------------------------------
//
// layout: magic u32, version u32, config digest u64, tensor count u32,
//         tensor blocks (name, rank, dims, f64 data), metadata text block
//         (u32 length prefix), FNV-1a 64 checksum of everything before it.

namespace {

constexpr std::uint32_t kCkptMagic = 0x4B455645u;  // "EVEK"
constexpr std::uint32_t kCkptVersion = 2u;

struct Hasher {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void feed(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
};

struct Writer {
  std::ofstream os;
  Hasher hash;
  explicit Writer(const std::string& path) : os(path, std::ios::binary) {
    if (!os) throw IoError("checkpoint save: cannot open " + path);
  }
  void raw(const void* data, std::size_t n) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    hash.feed(data, n);
  }
  void u32(std::uint32_t x) { raw(&x, 4); }
  void u64(std::uint64_t x) { raw(&x, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) u32(static_cast<std::uint32_t>(d));
    raw(t.v.data(), t.v.size() * sizeof(double));
  }
};

struct Reader {
  std::ifstream is;
  Hasher hash;
  explicit Reader(const std::string& path) : is(path, std::ios::binary) {
    if (!is) throw IoError("checkpoint load: cannot open " + path);
  }
  void raw(void* data, std::size_t n) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (is.gcount() != static_cast<std::streamsize>(n))
      throw IoError("checkpoint load: truncated file");
    hash.feed(data, n);
  }
  std::uint32_t u32() {
    std::uint32_t x;
    raw(&x, 4);
    return x;
  }
  std::uint64_t u64() {
    std::uint64_t x;
    raw(&x, 8);
    return x;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    Shape shape(rank);
    for (auto& d : shape) d = u32();
    Tensor t(shape);
    raw(t.v.data(), t.v.size() * sizeof(double));
    return t;
  }
};

std::uint64_t config_digest(const BackboneConfig& c) {
  Hasher h;
  const std::uint64_t fields[] = {c.context_len, c.embed_dim,       c.hidden_dim,
                                  c.mlp_layers,  c.latent_dim,      c.mc_samples_train,
                                  c.mc_samples_eval, c.variational ? 1ULL : 0ULL};
  h.feed(fields, sizeof(fields));
  return h.h;
}

std::string meta_text(const Checkpoint& c) {
  std::ostringstream os;
  os.precision(17);
  os << "context_len=" << c.config.context_len << "\nembed_dim=" << c.config.embed_dim
     << "\nhidden_dim=" << c.config.hidden_dim << "\nmlp_layers=" << c.config.mlp_layers
     << "\nlatent_dim=" << c.config.latent_dim
     << "\nmc_samples_train=" << c.config.mc_samples_train
     << "\nmc_samples_eval=" << c.config.mc_samples_eval
     << "\nvariational=" << (c.config.variational ? 1 : 0) << "\nbeta=" << c.regulator.beta
     << "\nhigh_threshold=" << c.regulator.high_threshold << "\nunit_scale=";
  for (std::size_t i = 0; i < c.regulator.unit_scale.size(); ++i)
    os << (i ? " " : "") << c.regulator.unit_scale[i];
  os << "\nseed=" << c.record.seed << "\nepoch=" << c.record.epoch << "\nce=" << c.record.ce
     << "\nacc=" << c.record.acc << "\nlocal_recon=" << c.record.local_recon
     << "\nfrac_too_high=" << c.record.frac_too_high
     << "\nmu2_mean_eval=" << c.record.mu2_mean_eval << "\nkl=" << c.record.kl
     << "\nfinite=" << (c.record.finite ? 1 : 0)
     << "\ntask_safe=" << (c.record.task_safe ? 1 : 0)
     << "\nselection_reason=" << c.selection_reason << "\n";
  return os.str();
}

void parse_meta(const std::string& text, Checkpoint& c) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "context_len") c.config.context_len = std::stoul(v);
    else if (k == "embed_dim") c.config.embed_dim = std::stoul(v);
    else if (k == "hidden_dim") c.config.hidden_dim = std::stoul(v);
    else if (k == "mlp_layers") c.config.mlp_layers = std::stoul(v);
    else if (k == "latent_dim") c.config.latent_dim = std::stoul(v);
    else if (k == "mc_samples_train") c.config.mc_samples_train = std::stoul(v);
    else if (k == "mc_samples_eval") c.config.mc_samples_eval = std::stoul(v);
    else if (k == "variational") c.config.variational = v == "1";
    else if (k == "beta") c.regulator.beta = std::stod(v);
    else if (k == "high_threshold") c.regulator.high_threshold = std::stod(v);
    else if (k == "unit_scale") {
      std::istringstream ls(v);
      double x;
      c.regulator.unit_scale.clear();
      while (ls >> x) c.regulator.unit_scale.push_back(x);
    } else if (k == "seed") c.record.seed = std::stoll(v);
    else if (k == "epoch") c.record.epoch = std::stoll(v);
    else if (k == "ce") c.record.ce = std::stod(v);
    else if (k == "acc") c.record.acc = std::stod(v);
    else if (k == "local_recon") c.record.local_recon = std::stod(v);
    else if (k == "frac_too_high") c.record.frac_too_high = std::stod(v);
    else if (k == "mu2_mean_eval") c.record.mu2_mean_eval = std::stod(v);
    else if (k == "kl") c.record.kl = std::stod(v);
    else if (k == "finite") c.record.finite = v == "1";
    else if (k == "task_safe") c.record.task_safe = v == "1";
    else if (k == "selection_reason") c.selection_reason = v;
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Writer w(path);
  w.u32(kCkptMagic);
  w.u32(kCkptVersion);
  w.u64(config_digest(ckpt.config));
  w.u32(static_cast<std::uint32_t>(ckpt.params.size() + 1));
  w.tensor("__embed__", ckpt.embedding);
  for (const auto& [name, t] : ckpt.params) w.tensor(name, t);
  w.str(meta_text(ckpt));
  const std::uint64_t sum = w.hash.h;
  w.os.write(reinterpret_cast<const char*>(&sum), 8);
  if (!w.os) throw IoError("checkpoint save: write failure on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  if (r.u32() != kCkptMagic) throw IoError("checkpoint load: bad magic in " + path);
  const std::uint32_t ver = r.u32();
  if (ver != kCkptVersion)
    throw IoError("checkpoint load: unsupported version " + std::to_string(ver) +
                  " (reader supports " + std::to_string(kCkptVersion) + ")");
  const std::uint64_t digest = r.u64();
  Checkpoint c;
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    Tensor t = r.tensor();
    if (name == "__embed__")
      c.embedding = std::move(t);
    else
      c.params.emplace(std::move(name), std::move(t));
  }
  parse_meta(r.str(), c);
  const std::uint64_t computed = r.hash.h;
  std::uint64_t stored;
  r.is.read(reinterpret_cast<char*>(&stored), 8);
  if (r.is.gcount() != 8) throw IoError("checkpoint load: truncated file");
  if (stored != computed) throw IoError("checkpoint load: checksum mismatch in " + path);
  if (config_digest(c.config) != digest)
    throw IoError("checkpoint load: config digest mismatch in " + path);
  return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  auto table = std::make_shared<EmbeddingTable>(EmbeddingTable::from_matrix(ckpt.embedding));
  Model m(ckpt.config, table, 0);
  m.params() = ckpt.params;
  return m;
}

Checkpoint checkpoint_from_model(const Model& model, const RegulatorState& reg,
                                 const EpochRecord& rec, const std::string& reason) {
  Checkpoint c;
  c.params = model.params();
  c.embedding = model.embedding().matrix();
  c.config = model.config();
  c.regulator = reg;
  c.record = rec;
  c.selection_reason = reason;
  return c;
}

void export_records_csv(const std::string& path, const std::vector<EpochRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IoError("record export: cannot open " + path);
  os << "seed,epoch,ce,acc,local_recon,frac_too_high,mu2_mean_eval,kl,finite,task_safe\n";
  char buf[320];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%d\n",
                  static_cast<long long>(r.seed), static_cast<long long>(r.epoch), r.ce, r.acc,
                  r.local_recon, r.frac_too_high, r.mu2_mean_eval, r.kl, r.finite ? 1 : 0,
                  r.task_safe ? 1 : 0);
    os << buf;
  }
}

}  // namespace eve

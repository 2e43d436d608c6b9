#include "eve/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "eve/error.hpp"
#include "eve/rng.hpp"

namespace eve {

void DataConfig::validate() const {
  if (!(dataset_fraction > 0.0 && dataset_fraction <= 1.0))
    throw ConfigError("data.dataset_fraction must be in (0, 1]");
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw ConfigError("data.val_frac must be in (0, 1)");
  if (context_len < 1) throw ConfigError("data.context_len must be >= 1");
  if (target_stride < 1) throw ConfigError("data.target_stride must be >= 1");
}

std::vector<RawPair> synthetic_corpus(const CorpusConfig& corpus, const DataConfig& cfg) {
  const std::size_t V = corpus.vocab_size;
  Rng rng(corpus.seed);

  // Per-state successor sets. Ambiguous states get 2-4 near-equiprobable
  // continuations; the rest are close to deterministic.
  std::vector<std::vector<int>> succ(V);
  std::vector<std::vector<double>> cum(V);
  for (std::size_t s = 0; s < V; ++s) {
    const bool ambiguous = rng.uniform() < corpus.ambiguous_frac;
    const std::size_t k = ambiguous ? 2 + rng.uniform_index(3) : 1 + (rng.uniform() < 0.15 ? 1 : 0);
    std::vector<double> w(k);
    for (std::size_t j = 0; j < k; ++j) {
      succ[s].push_back(static_cast<int>(rng.uniform_index(V)));
      w[j] = ambiguous ? 1.0 + 0.1 * rng.uniform() : (j == 0 ? 1.0 : 0.05);
    }
    double tot = 0.0;
    for (double x : w) tot += x;
    double acc = 0.0;
    for (double x : w) {
      acc += x / tot;
      cum[s].push_back(acc);
    }
  }

  auto draw_next = [&](Rng& r, int state) {
    const auto& c = cum[static_cast<std::size_t>(state)];
    const double u = r.uniform();
    for (std::size_t j = 0; j < c.size(); ++j)
      if (u <= c[j]) return succ[static_cast<std::size_t>(state)][j];
    return succ[static_cast<std::size_t>(state)].back();
  };

  std::vector<RawPair> pairs;
  pairs.reserve(corpus.num_pairs);
  for (std::size_t i = 0; i < corpus.num_pairs; ++i) {
    Rng pr(Rng::mix(corpus.seed, i));
    RawPair p;
    const std::size_t plen = pr.uniform_index(cfg.max_prompt_tokens + 1);
    // most stories comfortably above min_story_tokens, a few below to
    // exercise the filter
    const std::size_t smin = cfg.min_story_tokens > 8 ? cfg.min_story_tokens - 8 : 1;
    const std::size_t slen = smin + pr.uniform_index(cfg.max_story_tokens + 16 - smin);
    int state = static_cast<int>(pr.uniform_index(V));
    for (std::size_t t = 0; t < plen; ++t) {
      p.prompt_tokens.push_back(state);
      state = draw_next(pr, state);
    }
    for (std::size_t t = 0; t < slen; ++t) {
      p.story_tokens.push_back(state);
      state = draw_next(pr, state);
    }
    truncate_pair(p, cfg);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void truncate_pair(RawPair& pair, const DataConfig& cfg) {
  if (pair.prompt_tokens.size() > cfg.max_prompt_tokens)
    pair.prompt_tokens.resize(cfg.max_prompt_tokens);
  if (pair.story_tokens.size() > cfg.max_story_tokens)
    pair.story_tokens.resize(cfg.max_story_tokens);
}

std::vector<RawPair> apply_dataset_fraction(std::vector<RawPair> pairs, double fraction) {
  const std::size_t keep = static_cast<std::size_t>(
      std::lround(fraction * static_cast<double>(pairs.size())));
  if (keep < pairs.size()) pairs.resize(keep);
  return pairs;
}

std::vector<Example> make_examples(const std::vector<RawPair>& pairs, const DataConfig& cfg) {
  std::vector<Example> out;
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const RawPair& p = pairs[pi];
    if (p.story_tokens.size() < cfg.min_story_tokens) continue;
    TokenSeq stream = p.prompt_tokens;
    stream.insert(stream.end(), p.story_tokens.begin(), p.story_tokens.end());
    const std::size_t prompt_len = p.prompt_tokens.size();
    for (std::size_t t = cfg.context_len; t < stream.size(); t += cfg.target_stride) {
      if (t < prompt_len) continue;  // target must lie in the story region
      Example ex;
      ex.context.assign(stream.begin() + static_cast<std::ptrdiff_t>(t - cfg.context_len),
                        stream.begin() + static_cast<std::ptrdiff_t>(t));
      ex.target = stream[t];
      ex.source_pair = pi;
      out.push_back(std::move(ex));
    }
  }
  if (out.empty()) throw DataError("make_examples: no examples survive filtering");
  return out;
}

Split split_examples(const std::vector<Example>& examples, std::size_t num_pairs,
                     double val_frac, std::uint64_t seed) {
  if (examples.empty()) throw ContractViolation("split: empty example set");
  const std::size_t n_val = static_cast<std::size_t>(
      std::lround(val_frac * static_cast<double>(num_pairs)));
  if (n_val == 0 || n_val >= num_pairs)
    throw DataError("split: val_frac yields an empty split side");

  std::vector<std::size_t> order(num_pairs);
  for (std::size_t i = 0; i < num_pairs; ++i) order[i] = i;
  Rng rng(Rng::mix(seed, 0x5917ULL));
  for (std::size_t i = num_pairs; i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);

  std::vector<char> is_val(num_pairs, 0);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = 1;

  Split s;
  for (std::size_t i = 0; i < num_pairs; ++i)
    if (is_val[i]) s.val_pairs.push_back(i);
  for (const Example& ex : examples)
    (is_val[ex.source_pair] ? s.val : s.train).push_back(ex);
  return s;
}

namespace {
constexpr std::uint32_t kEmbedMagic = 0x4D455645u;  // "EVEM"
constexpr std::uint32_t kEmbedVersion = 1u;

void put_u32(std::ofstream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

EmbeddingTable EmbeddingTable::seeded(std::size_t vocab_size, std::size_t embed_dim,
                                      std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0xE3BEDu));
  const double sd = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  return EmbeddingTable(rng.normal_tensor({vocab_size, embed_dim}, sd));
}

EmbeddingTable EmbeddingTable::import_file(const std::string& path, std::size_t vocab_size,
                                           std::size_t embed_dim) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("embedding import: cannot open " + path);
  if (get_u32(is) != kEmbedMagic) throw IoError("embedding import: bad magic in " + path);
  if (get_u32(is) != kEmbedVersion) throw IoError("embedding import: unsupported version");
  const std::size_t fv = get_u32(is), fd = get_u32(is);
  if (fv != vocab_size || fd != embed_dim) {
    std::ostringstream os;
    os << "embedding import: shape mismatch, file (" << fv << "," << fd << ") vs declared ("
       << vocab_size << "," << embed_dim << ")";
    throw DataError(os.str());
  }
  Tensor m({vocab_size, embed_dim});
  is.read(reinterpret_cast<char*>(m.v.data()),
          static_cast<std::streamsize>(m.v.size() * sizeof(double)));
  if (!is) throw IoError("embedding import: truncated file " + path);
  return EmbeddingTable(std::move(m));
}

void EmbeddingTable::export_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("embedding export: cannot open " + path);
  put_u32(os, kEmbedMagic);
  put_u32(os, kEmbedVersion);
  put_u32(os, static_cast<std::uint32_t>(vocab_size()));
  put_u32(os, static_cast<std::uint32_t>(embed_dim()));
  os.write(reinterpret_cast<const char*>(matrix_.v.data()),
           static_cast<std::streamsize>(matrix_.v.size() * sizeof(double)));
}

std::vector<double> EmbeddingTable::lookup(int token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_size())
    throw ContractViolation("embedding lookup: token id out of range");
  const std::size_t d = embed_dim();
  const auto* base = matrix_.v.data() + static_cast<std::size_t>(token) * d;
  return std::vector<double>(base, base + d);
}

std::vector<RawPair> import_corpus(const std::string& path, std::size_t& vocab_size_out) {
  std::ifstream is(path);
  if (!is) throw IoError("corpus import: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw IoError("corpus import: empty file " + path);
  vocab_size_out = static_cast<std::size_t>(std::stoul(line));
  std::vector<TokenSeq> seqs;
  while (std::getline(is, line)) {
    TokenSeq seq;
    std::istringstream ls(line);
    int tok;
    while (ls >> tok) {
      if (tok < 0 || static_cast<std::size_t>(tok) >= vocab_size_out)
        throw DataError("corpus import: token id out of range");
      seq.push_back(tok);
    }
    seqs.push_back(std::move(seq));
  }
  if (seqs.size() % 2 != 0)
    throw DataError("corpus import: expected alternating prompt/story lines");
  std::vector<RawPair> pairs;
  for (std::size_t i = 0; i + 1 < seqs.size(); i += 2)
    pairs.push_back({std::move(seqs[i]), std::move(seqs[i + 1])});
  return pairs;
}

void export_corpus(const std::string& path, const std::vector<RawPair>& pairs,
                   std::size_t vocab_size) {
  std::ofstream os(path);
  if (!os) throw IoError("corpus export: cannot open " + path);
  os << vocab_size << "\n";
  auto write_seq = [&os](const TokenSeq& s) {
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? " " : "") << s[i];
    os << "\n";
  };
  for (const RawPair& p : pairs) {
    write_seq(p.prompt_tokens);
    write_seq(p.story_tokens);
  }
}

std::uint64_t examples_checksum(const std::vector<Example>& examples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto fnv = [&h](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  for (const Example& ex : examples) {
    for (int t : ex.context) fnv(static_cast<std::uint64_t>(t));
    fnv(static_cast<std::uint64_t>(ex.target));
    fnv(ex.source_pair);
  }
  return h;
}

}  // namespace eve

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eve/tensor.hpp"

namespace eve {

using TokenSeq = std::vector<int>;

struct RawPair {
  TokenSeq prompt_tokens;
  TokenSeq story_tokens;
};

struct Example {
  TokenSeq context;  // exactly context_len tokens
  int target = 0;
  std::size_t source_pair = 0;
};

struct DataConfig {
  double dataset_fraction = 1.0;
  double val_frac = 0.20;
  std::size_t max_prompt_tokens = 96;
  std::size_t max_story_tokens = 192;
  std::size_t context_len = 24;
  std::size_t target_stride = 2;
  std::size_t min_story_tokens = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CorpusConfig {
  std::size_t vocab_size = 64;
  std::size_t num_pairs = 400;
  std::uint64_t seed = 7;
  // fraction of Markov states given several near-equiprobable successors,
  // so MC uncertainty signals stay non-degenerate
  double ambiguous_frac = 0.5;
};

// Seeded Markov-chain corpus over a small symbol vocabulary. The chain mixes
// low-entropy states with deliberately ambiguous ones (2-4 near-equiprobable
// continuations).
std::vector<RawPair> synthetic_corpus(const CorpusConfig& corpus, const DataConfig& cfg);

// Truncates prompt/story to the configured maxima.
void truncate_pair(RawPair& pair, const DataConfig& cfg);

// Keeps the first round(fraction * N) pairs.
std::vector<RawPair> apply_dataset_fraction(std::vector<RawPair> pairs, double fraction);

// Sliding windows over prompt+story; only windows whose target lies inside
// the story region are emitted. Throws DataError when nothing survives.
std::vector<Example> make_examples(const std::vector<RawPair>& pairs, const DataConfig& cfg);

struct Split {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<std::size_t> val_pairs;  // raw-pair indices in the validation side
};

// Pair-level partition: no raw pair contributes to both sides.
Split split_examples(const std::vector<Example>& examples, std::size_t num_pairs,
                     double val_frac, std::uint64_t seed);

class EmbeddingTable {
 public:
  static EmbeddingTable seeded(std::size_t vocab_size, std::size_t embed_dim, std::uint64_t seed);
  static EmbeddingTable from_matrix(Tensor m) { return EmbeddingTable(std::move(m)); }
  static EmbeddingTable import_file(const std::string& path, std::size_t vocab_size,
                                    std::size_t embed_dim);
  void export_file(const std::string& path) const;

  std::size_t vocab_size() const { return matrix_.rows(); }
  std::size_t embed_dim() const { return matrix_.cols(); }
  const Tensor& matrix() const { return matrix_; }

  // row of token t, shape (embed_dim,)
  std::vector<double> lookup(int token) const;

 private:
  explicit EmbeddingTable(Tensor m) : matrix_(std::move(m)) {}
  Tensor matrix_;  // frozen by construction: no mutable access is exposed
};

// Newline-delimited token-id corpus: first line is the vocab size, then one
// sequence per line. Sequences alternate prompt, story.
std::vector<RawPair> import_corpus(const std::string& path, std::size_t& vocab_size_out);
void export_corpus(const std::string& path, const std::vector<RawPair>& pairs,
                   std::size_t vocab_size);

// Stable content checksum (FNV-1a over the serialized example stream).
std::uint64_t examples_checksum(const std::vector<Example>& examples);

}  // namespace eve

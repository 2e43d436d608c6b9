#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "eve/data.hpp"
#include "eve/graph.hpp"
#include "eve/optim.hpp"
#include "eve/rng.hpp"

namespace eve {

struct BackboneConfig {
  std::size_t context_len = 24;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t mlp_layers = 2;
  std::size_t latent_dim = 16;
  std::size_t mc_samples_train = 4;
  std::size_t mc_samples_eval = 12;
  bool variational = true;

  void validate() const;
  std::size_t input_dim() const { return context_len * embed_dim; }
  // latent block sits after this many pre-latent layers (mid-stack)
  std::size_t pre_layers() const { return (mlp_layers + 1) / 2; }
  std::size_t post_layers() const { return mlp_layers - pre_layers(); }
};

// Node ids of one forward branch; values live in the owning Graph.
struct ForwardNodes {
  NodeId logits = -1;
  NodeId h_pre = -1;  // pre-latent hidden vector h
  bool has_latent = false;
  NodeId mu_q = -1, logsig_q = -1;
  NodeId mu_p = -1, logsig_p = -1;
  NodeId z = -1;
  NodeId h_hat = -1;
  NodeId det_act = -1;  // DET: deterministic analogue activations
};

struct PredictivePass {
  Tensor probs;  // [B, V], each row on the simplex
  Tensor mu_q, sigma_q, mu_p, sigma_p, z, h, h_hat;  // empty for DET
  Tensor det_act;                                    // empty for EVE
};

// One model family instance (EVE when cfg.variational, DET otherwise).
// Shares the frozen embedding table between the input lookup and the tied
// prediction head.
class Model {
 public:
  Model(BackboneConfig cfg, std::shared_ptr<const EmbeddingTable> embed, std::uint64_t seed);

  const BackboneConfig& config() const { return cfg_; }
  const EmbeddingTable& embedding() const { return *embed_; }
  std::shared_ptr<const EmbeddingTable> embedding_ptr() const { return embed_; }
  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }

  // Concatenated frozen embeddings of a context batch, [B, context_len*embed_dim].
  Tensor context_input(const std::vector<TokenSeq>& contexts) const;

  std::map<std::string, NodeId> register_params(Graph& g) const;

  // One forward branch. For EVE, eps must be a [B, latent_dim] noise tensor;
  // DET ignores it.
  ForwardNodes forward(Graph& g, const std::map<std::string, NodeId>& pnodes,
                       const Tensor& input, const Tensor* eps) const;

  // Value-level forward for a single context with an explicit noise draw.
  PredictivePass forward_pass(const TokenSeq& context, const Tensor* eps) const;

  // M independent noise draws; returns per-pass results and the predictive
  // mean over pass probabilities.
  std::vector<PredictivePass> mc_forward(const std::vector<TokenSeq>& contexts, std::size_t M,
                                         std::uint64_t seed) const;

  static Tensor predictive_mean(const std::vector<PredictivePass>& passes);

  Tensor draw_eps(std::size_t batch, Rng& rng) const;

 private:
  BackboneConfig cfg_;
  std::shared_ptr<const EmbeddingTable> embed_;
  ParamMap params_;
};

}  // namespace eve

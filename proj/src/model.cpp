#include "eve/model.hpp"

#include <cmath>

#include "eve/error.hpp"
#include "eve/rng.hpp"

namespace eve {

void BackboneConfig::validate() const {
  if (mc_samples_train < 1 || mc_samples_eval < 1)
    throw ConfigError("backbone: mc sample counts must be >= 1");
  if (variational && latent_dim < 1) throw ConfigError("backbone: latent_dim must be >= 1");
  if (mlp_layers < 1) throw ConfigError("backbone: mlp_layers must be >= 1");
  if (context_len < 1 || embed_dim < 1 || hidden_dim < 1)
    throw ConfigError("backbone: dims must be >= 1");
}

namespace {

void init_linear(ParamMap& p, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
                 double bias_init = 0.0) {
  p.emplace(name + ".W", rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
  p.emplace(name + ".b", Tensor({1, out}, bias_init));
}

NodeId linear(Graph& g, const std::map<std::string, NodeId>& pn, const std::string& name,
              NodeId x) {
  return g.add_rowvec(g.matmul(x, pn.at(name + ".W")), pn.at(name + ".b"));
}

}  // namespace

Model::Model(BackboneConfig cfg, std::shared_ptr<const EmbeddingTable> embed, std::uint64_t seed)
    : cfg_(cfg), embed_(std::move(embed)) {
  cfg_.validate();
  if (embed_->embed_dim() != cfg_.embed_dim)
    throw ConfigError("model: embedding table dim does not match backbone embed_dim");
  Rng rng(Rng::mix(seed, 0xB0DE1ULL));
  const std::size_t D = cfg_.input_dim(), H = cfg_.hidden_dim, L = cfg_.latent_dim;
  init_linear(params_, rng, "pre0", D, H);
  for (std::size_t l = 1; l < cfg_.pre_layers(); ++l)
    init_linear(params_, rng, "pre" + std::to_string(l), H, H);
  if (cfg_.variational) {
    init_linear(params_, rng, "q_mu", D + H, L);
    init_linear(params_, rng, "q_ls", D + H, L, -1.0);
    init_linear(params_, rng, "p_mu", H, L);
    init_linear(params_, rng, "p_ls", H, L, -1.0);
    init_linear(params_, rng, "recon", L, H);
  } else {
    init_linear(params_, rng, "det", H, L);
  }
  init_linear(params_, rng, "bridge", L, H);
  for (std::size_t l = 0; l < cfg_.post_layers(); ++l)
    init_linear(params_, rng, "post" + std::to_string(l), H, H);
  init_linear(params_, rng, "out", H, cfg_.embed_dim);
}

Tensor Model::context_input(const std::vector<TokenSeq>& contexts) const {
  const std::size_t B = contexts.size(), D = cfg_.input_dim(), E = cfg_.embed_dim;
  Tensor x({B, D});
  for (std::size_t r = 0; r < B; ++r) {
    if (contexts[r].size() != cfg_.context_len)
      throw ContractViolation("forward: context length must equal context_len");
    for (std::size_t t = 0; t < cfg_.context_len; ++t) {
      auto row = embed_->lookup(contexts[r][t]);
      for (std::size_t j = 0; j < E; ++j) x.v[r * D + t * E + j] = row[j];
    }
  }
  return x;
}

std::map<std::string, NodeId> Model::register_params(Graph& g) const {
  std::map<std::string, NodeId> pn;
  for (const auto& [name, t] : params_) pn.emplace(name, g.param(name, t));
  pn.emplace("__embed__", g.frozen("__embed__", embed_->matrix()));
  return pn;
}

ForwardNodes Model::forward(Graph& g, const std::map<std::string, NodeId>& pn,
                            const Tensor& input, const Tensor* eps) const {
  ForwardNodes out;
  NodeId x = g.input(input);
  NodeId h = g.tanh_op(linear(g, pn, "pre0", x));
  for (std::size_t l = 1; l < cfg_.pre_layers(); ++l)
    h = g.tanh_op(linear(g, pn, "pre" + std::to_string(l), h));
  out.h_pre = h;

  NodeId latent = -1;
  if (cfg_.variational) {
    out.has_latent = true;
    NodeId xh = g.concat_cols({x, h});
    out.mu_q = linear(g, pn, "q_mu", xh);
    out.logsig_q = linear(g, pn, "q_ls", xh);
    out.mu_p = linear(g, pn, "p_mu", h);
    out.logsig_p = linear(g, pn, "p_ls", h);
    if (eps == nullptr) throw ContractViolation("forward: EVE requires a noise tensor");
    // z = mu_q + exp(logsig_q) * eps
    out.z = g.add(out.mu_q, g.cmul(g.exp_op(out.logsig_q), *eps));
    out.h_hat = linear(g, pn, "recon", out.z);
    latent = out.z;
  } else {
    out.det_act = g.tanh_op(linear(g, pn, "det", h));
    latent = out.det_act;
  }

  NodeId u = g.tanh_op(linear(g, pn, "bridge", latent));
  for (std::size_t l = 0; l < cfg_.post_layers(); ++l)
    u = g.tanh_op(linear(g, pn, "post" + std::to_string(l), u));
  NodeId proj = linear(g, pn, "out", u);
  out.logits = g.matmul_nt(proj, pn.at("__embed__"));  // tied head
  return out;
}

Tensor Model::draw_eps(std::size_t batch, Rng& rng) const {
  return rng.normal_tensor({batch, cfg_.latent_dim});
}

namespace {
Tensor node_val(const Graph& g, NodeId id) {
  return id >= 0 ? g.value(id) : Tensor();
}
Tensor exp_tensor(Tensor t) {
  for (double& x : t.v) x = std::exp(x);
  return t;
}
}  // namespace

PredictivePass Model::forward_pass(const TokenSeq& context, const Tensor* eps) const {
  Graph g;
  auto pn = register_params(g);
  ForwardNodes fn = forward(g, pn, context_input({context}), eps);
  PredictivePass pass;
  pass.probs = g.softmax_of(fn.logits);
  if (fn.has_latent) {
    pass.mu_q = node_val(g, fn.mu_q);
    pass.sigma_q = exp_tensor(node_val(g, fn.logsig_q));
    pass.mu_p = node_val(g, fn.mu_p);
    pass.sigma_p = exp_tensor(node_val(g, fn.logsig_p));
    pass.z = node_val(g, fn.z);
    pass.h = node_val(g, fn.h_pre);
    pass.h_hat = node_val(g, fn.h_hat);
  } else {
    pass.h = node_val(g, fn.h_pre);
    pass.det_act = node_val(g, fn.det_act);
  }
  return pass;
}

std::vector<PredictivePass> Model::mc_forward(const std::vector<TokenSeq>& contexts, std::size_t M,
                                              std::uint64_t seed) const {
  if (M < 1) throw ContractViolation("mc_forward: M must be >= 1");
  const Tensor input = context_input(contexts);
  Rng rng(Rng::mix(seed, 0x3CF0ULL));
  std::vector<PredictivePass> passes;
  passes.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    Graph g;
    auto pn = register_params(g);
    Tensor eps;
    const Tensor* eps_ptr = nullptr;
    if (cfg_.variational) {
      eps = draw_eps(contexts.size(), rng);
      eps_ptr = &eps;
    }
    ForwardNodes fn = forward(g, pn, input, eps_ptr);
    PredictivePass pass;
    pass.probs = g.softmax_of(fn.logits);
    pass.h = node_val(g, fn.h_pre);
    if (fn.has_latent) {
      pass.mu_q = node_val(g, fn.mu_q);
      pass.sigma_q = exp_tensor(node_val(g, fn.logsig_q));
      pass.mu_p = node_val(g, fn.mu_p);
      pass.sigma_p = exp_tensor(node_val(g, fn.logsig_p));
      pass.z = node_val(g, fn.z);
      pass.h_hat = node_val(g, fn.h_hat);
    } else {
      pass.det_act = node_val(g, fn.det_act);
    }
    passes.push_back(std::move(pass));
  }
  return passes;
}

Tensor Model::predictive_mean(const std::vector<PredictivePass>& passes) {
  if (passes.empty()) throw ContractViolation("predictive_mean: empty pass list");
  Tensor mean = passes[0].probs;
  for (std::size_t m = 1; m < passes.size(); ++m)
    for (std::size_t i = 0; i < mean.v.size(); ++i) mean.v[i] += passes[m].probs.v[i];
  const double inv = 1.0 / static_cast<double>(passes.size());
  for (double& x : mean.v) x *= inv;
  return mean;
}

}  // namespace eve

#include "eve/optim.hpp"

#include <cmath>

#include "eve/error.hpp"

namespace eve {

double global_norm(const GradMap& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.v) {
      if (!std::isfinite(x)) throw NumericError("non-finite gradient entry in parameter '" + name + "'");
      sq += x * x;
    }
  }
  return std::sqrt(sq);
}

GradMap clip_global_norm(const GradMap& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractViolation("clip_global_norm: max_norm must be positive");
  const double g = global_norm(grads);
  if (g <= max_norm) return grads;
  const double s = max_norm / g;
  GradMap out = grads;
  for (auto& [name, t] : out)
    for (double& x : t.v) x *= s;
  return out;
}

void Optimizer::step(ParamMap& params, const GradMap& grads) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;  // frozen or unused this step
    const Tensor& g = git->second;
    if (!g.same_shape(p))
      throw ContractViolation("optimizer_step: shape mismatch for '" + name + "': " +
                              shape_str(p.shape) + " vs " + shape_str(g.shape));
    Tensor& m = m_.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor(p.shape)).first->second;
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * g.v[i];
      v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      // decoupled decay: shrink first, then the adaptive step
      p.v[i] -= cfg_.lr * cfg_.weight_decay * p.v[i];
      p.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace eve

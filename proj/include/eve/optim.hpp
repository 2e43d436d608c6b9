#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "eve/tensor.hpp"

namespace eve {

using GradMap = std::map<std::string, Tensor>;
using ParamMap = std::map<std::string, Tensor>;

double global_norm(const GradMap& grads);

// Scales every gradient by max_norm/g when the global L2 norm g exceeds
// max_norm. Throws NumericError naming the parameter on non-finite entries.
GradMap clip_global_norm(const GradMap& grads, double max_norm);

struct OptimConfig {
  double lr = 2e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with decoupled weight decay.
class Optimizer {
 public:
  explicit Optimizer(OptimConfig cfg) : cfg_(cfg) {}

  void step(ParamMap& params, const GradMap& grads);

  std::int64_t step_count() const { return step_; }
  const OptimConfig& config() const { return cfg_; }

 private:
  OptimConfig cfg_;
  std::int64_t step_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace eve

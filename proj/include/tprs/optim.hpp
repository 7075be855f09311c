#pragma once

#include <vector>

#include "tprs/tensor.hpp"

namespace tprs {

struct OptimConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;  // decoupled, applied inside the step
  void validate() const;
};

// First/second moment buffers, one pair per parameter tensor.
struct AdamState {
  int64_t step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Bias-corrected Adam update with decoupled weight decay. Parameters without
// an accumulated gradient are treated as having zero gradient (decay still
// applies). Throws on non-finite gradients, naming the offending parameter.
void adam_step(std::vector<Tensor*>& params, AdamState& state,
               const OptimConfig& cfg, double lr_override = -1.0);

void zero_grads(std::vector<Tensor*>& params);

}  // namespace tprs
